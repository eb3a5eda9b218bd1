#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "star/config.hpp"
#include "star/dataset.hpp"
#include "star/model.hpp"
#include "star/text.hpp"

namespace star::test {

inline std::string data_path(const std::string& name) { return std::string(STAR_TEST_DATA) + "/" + name; }

inline Words words(std::string_view text) { return token_texts(tokenize(text)); }

/// Small dimensions so finite differences and training stay cheap.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.word_dim = 6;
  c.hidden = 5;
  c.char_dim = 4;
  c.char_channels = 3;
  c.char_width = 3;
  return c;
}

/// Largest relative error between the analytic gradient of `loss` and
/// central differences, over every entry of every parameter.
/// rel = |a - n| / max(1e-6, |a| + |n|)
inline double max_gradient_error(ModelParams<double>& params,
                                 const std::function<ad::Var<double>(ad::Tape<double>&)>& loss,
                                 double step = 1e-5) {
  params.zero_grad();
  {
    ad::Tape<double> tape;
    tape.backward(loss(tape));
  }
  double worst = 0;
  for (auto* p : params.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value(i);
      p->value(i) = keep + step;
      ad::Tape<double> up(false);
      const double hi = loss(up).scalar();
      p->value(i) = keep - step;
      ad::Tape<double> down(false);
      const double lo = loss(down).scalar();
      p->value(i) = keep;
      const double numeric = (hi - lo) / (2 * step);
      const double analytic = p->grad(i);
      const double rel = std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace star::test
