#include "star/model.hpp"

#include <cmath>

#include "star/text.hpp"

namespace star {

using ad::Matrix;
using ad::Var;

namespace {

template <typename T>
Matrix<T> uniform(Eigen::Index r, Eigen::Index c, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Matrix<T> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
T glorot(Eigen::Index fan_out, Eigen::Index fan_in) {
  return static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template <typename T>
Var<T> zeros(ad::Tape<T>& tape, Eigen::Index r, Eigen::Index c) {
  return tape.constant(Matrix<T>::Zero(r, c));
}

template <typename T>
Var<T> run_lstm(ad::Tape<T>& tape, ad::Parameter<T>& wx_p, ad::Parameter<T>& wh_p,
                ad::Parameter<T>& b_p, const Var<T>& inputs, int hidden, bool reverse) {
  const auto n = inputs.cols();
  Var<T> wx = tape.parameter(wx_p);
  Var<T> wh = tape.parameter(wh_p);
  Var<T> b = tape.parameter(b_p);
  Var<T> projected = ad::matmul(wx, inputs);
  Var<T> h = zeros(tape, hidden, 1);
  Var<T> c = zeros(tape, hidden, 1);
  std::vector<Var<T>> states(static_cast<std::size_t>(n));
  for (Eigen::Index step = 0; step < n; ++step) {
    Eigen::Index pos = reverse ? n - 1 - step : step;
    Var<T> gates = ad::add_bias(ad::add(ad::col(projected, pos), ad::matmul(wh, h)), b);
    Var<T> i = ad::sigmoid(ad::rows(gates, 0, hidden));
    Var<T> f = ad::sigmoid(ad::rows(gates, hidden, hidden));
    Var<T> g = ad::tanh(ad::rows(gates, 2 * hidden, hidden));
    Var<T> o = ad::sigmoid(ad::rows(gates, 3 * hidden, hidden));
    c = ad::add(ad::cmul(f, c), ad::cmul(i, g));
    h = ad::cmul(o, ad::tanh(c));
    states[static_cast<std::size_t>(pos)] = h;
  }
  return ad::concat_cols<T>(std::span<const Var<T>>(states));
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelParams

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelDims& dims, std::size_t words, std::size_t chars,
                                    std::mt19937_64& rng) {
  ModelParams p;
  p.dims = dims;
  const auto W = static_cast<Eigen::Index>(words);
  const auto C = static_cast<Eigen::Index>(chars);
  const Eigen::Index H = dims.hidden, E = dims.embed_dim();
  const Eigen::Index window = dims.char_width * dims.char_dim;

  auto emb_c = uniform<T>(C, dims.char_dim, T(0.1), rng);
  emb_c.row(Vocabulary::kPad).setZero();
  p.char_emb = {"char_emb", emb_c};
  p.conv_w = {"conv_w", uniform<T>(dims.char_channels, window, glorot<T>(dims.char_channels, window), rng)};
  p.conv_b = {"conv_b", Matrix<T>::Zero(dims.char_channels, 1)};
  auto emb_w = uniform<T>(W, dims.word_dim, T(0.1), rng);
  emb_w.row(Vocabulary::kPad).setZero();
  p.word_emb = {"word_emb", emb_w};

  auto lstm_bias = [&]() {
    Matrix<T> b = Matrix<T>::Zero(4 * H, 1);
    b.middleRows(H, H).setOnes();  // forget gate
    return b;
  };
  p.fwd_wx = {"fwd_wx", uniform<T>(4 * H, E, glorot<T>(4 * H, E), rng)};
  p.fwd_wh = {"fwd_wh", uniform<T>(4 * H, H, glorot<T>(4 * H, H), rng)};
  p.fwd_b = {"fwd_b", lstm_bias()};
  p.bwd_wx = {"bwd_wx", uniform<T>(4 * H, E, glorot<T>(4 * H, E), rng)};
  p.bwd_wh = {"bwd_wh", uniform<T>(4 * H, H, glorot<T>(4 * H, H), rng)};
  p.bwd_b = {"bwd_b", lstm_bias()};

  const Eigen::Index F = dims.feature_dim();
  p.out_w = {"out_w", uniform<T>(1, F, glorot<T>(1, F), rng)};
  p.out_b = {"out_b", Matrix<T>::Zero(1, 1)};

  const Eigen::Index S = dims.state_dim();
  p.intent_w = {"intent_w", uniform<T>(dims.intentions, S, glorot<T>(dims.intentions, S), rng)};
  p.intent_b = {"intent_b", Matrix<T>::Zero(dims.intentions, 1)};
  return p;
}

template <typename T>
std::vector<ad::Parameter<T>*> ModelParams<T>::all() {
  return {&char_emb, &conv_w, &conv_b, &word_emb, &fwd_wx, &fwd_wh, &fwd_b,
          &bwd_wx,   &bwd_wh, &bwd_b,  &out_w,    &out_b,  &intent_w, &intent_b};
}

template <typename T>
std::vector<const ad::Parameter<T>*> ModelParams<T>::all() const {
  return {&char_emb, &conv_w, &conv_b, &word_emb, &fwd_wx, &fwd_wh, &fwd_b,
          &bwd_wx,   &bwd_wh, &bwd_b,  &out_w,    &out_b,  &intent_w, &intent_b};
}

template <typename T>
ParamGroup ModelParams<T>::group_of(const std::string& name) {
  if (name == "out_w" || name == "out_b")
    return ParamGroup::SplitOnly;
  if (name == "intent_w" || name == "intent_b")
    return ParamGroup::IntentionOnly;
  return ParamGroup::Shared;
}

template <typename T>
std::vector<ad::Parameter<T>*> ModelParams<T>::group(ParamGroup g) {
  std::vector<ad::Parameter<T>*> out;
  for (auto* p : all())
    if (group_of(p->name) == g)
      out.push_back(p);
  return out;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto* p : all())
    p->zero_grad();
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : all())
    n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.dims = dims;
  auto src = all();
  auto dst = out.all();
  for (std::size_t i = 0; i < src.size(); ++i)
    *dst[i] = ad::Parameter<U>(src[i]->name, src[i]->value.template cast<U>());
  return out;
}

// ---------------------------------------------------------------------------
// Forward pieces

template <typename T>
Var<T> embed(ad::Tape<T>& tape, ModelParams<T>& params, std::span<const Token> tokens,
             QuerySide side, std::mt19937_64* dropout_rng, T dropout) {
  const ModelDims& d = params.dims;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const auto words = params.word_emb.value.rows();
  const auto chars = params.char_emb.value.rows();

  Var<T> conv_w = tape.parameter(params.conv_w);
  Var<T> conv_b = tape.parameter(params.conv_b);
  std::vector<Var<T>> pooled;
  pooled.reserve(tokens.size());
  std::vector<int> word_ids;
  word_ids.reserve(tokens.size());
  for (const Token& tok : tokens) {
    std::vector<int> ids{Vocabulary::kPad};
    for (int c : tok.char_ids)
      ids.push_back(c < chars ? c : Vocabulary::kOov);
    ids.push_back(Vocabulary::kPad);
    while (static_cast<int>(ids.size()) < d.char_width)
      ids.push_back(Vocabulary::kPad);
    Var<T> windows = ad::char_windows(tape, params.char_emb, std::span<const int>(ids), d.char_width);
    pooled.push_back(ad::max_cols(ad::relu(ad::add_bias(ad::matmul(conv_w, windows), conv_b))));
    word_ids.push_back(tok.word_id < words ? tok.word_id : Vocabulary::kOov);
  }
  Var<T> char_part = ad::concat_cols<T>(std::span<const Var<T>>(pooled));
  Var<T> word_part = ad::lookup(tape, params.word_emb, std::span<const int>(word_ids));
  Var<T> dense = ad::concat_rows({char_part, word_part});

  if (dropout_rng && dropout > T(0)) {
    std::bernoulli_distribution keep(1.0 - static_cast<double>(dropout));
    Matrix<T> mask(dense.rows(), n);
    const T kept = T(1) / (T(1) - dropout);
    for (Eigen::Index r = 0; r < dense.rows(); ++r) {
      T v = keep(*dropout_rng) ? kept : T(0);
      mask.row(r).setConstant(v);
    }
    dense = ad::cmul(dense, tape.constant(std::move(mask)));
  }

  Matrix<T> one_hot = Matrix<T>::Zero(2, n);
  one_hot.row(side == QuerySide::Precedent ? 0 : 1).setOnes();
  return ad::concat_rows({dense, tape.constant(std::move(one_hot))});
}

template <typename T>
EncoderHalf<T> encode(ad::Tape<T>& tape, ModelParams<T>& params, const Var<T>& embedded) {
  const int H = params.dims.hidden;
  Var<T> fwd = run_lstm(tape, params.fwd_wx, params.fwd_wh, params.fwd_b, embedded, H, false);
  Var<T> bwd = run_lstm(tape, params.bwd_wx, params.bwd_wh, params.bwd_b, embedded, H, true);
  return {ad::concat_rows({fwd, bwd}), H};
}

template <typename T>
AttentionOutput<T> attend(const EncoderHalf<T>& h, const EncoderHalf<T>& u) {
  Var<T> a = ad::cosine_matrix(h.states, u.states);
  Var<T> p2f = ad::softmax_cols(a);                 // f_j over x, n x m
  Var<T> f2p = ad::softmax_cols(ad::transpose(a));  // over y, m x n
  return {a, ad::matmul(u.states, f2p), ad::matmul(h.states, p2f)};
}

template <typename T>
Var<T> split_features(const EncoderHalf<T>& h, const EncoderHalf<T>& u,
                      const AttentionOutput<T>& attention) {
  auto side = [](const Var<T>& states, const Var<T>& aware) -> Var<T> {
    const auto len = states.cols();
    if (len < 2)
      return {};
    const auto rows = states.rows();
    Var<T> prod = ad::cmul(states, aware);
    return ad::concat_rows({ad::block(states, 0, 0, rows, len - 1),
                            ad::block(prod, 0, 0, rows, len - 1),
                            ad::block(prod, 0, 1, rows, len - 1)});
  };
  std::vector<Var<T>> parts;
  if (Var<T> cx = side(h.states, attention.followup_aware); cx.valid())
    parts.push_back(cx);
  if (Var<T> cy = side(u.states, attention.precedent_aware); cy.valid())
    parts.push_back(cy);
  if (parts.empty())
    throw Error("split_features: both queries have a single token");
  return ad::concat_cols<T>(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> split_probs(ad::Tape<T>& tape, ModelParams<T>& params, const Var<T>& features) {
  Var<T> w = tape.parameter(params.out_w);
  Var<T> b = tape.parameter(params.out_b);
  return ad::sigmoid(ad::add_bias(ad::matmul(w, features), b));
}

template <typename T>
Var<T> span_repr(const EncoderHalf<T>& half, const Span& span) {
  if (span.begin < 0 || span.end > half.length() || span.begin >= span.end)
    throw Error("span_repr: span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                ") out of range for length " + std::to_string(half.length()));
  const int H = half.hidden;
  const int i = span.begin, k = span.end - 1;
  Var<T> fwd_i = ad::block(half.states, 0, i, H, 1);
  Var<T> fwd_k = ad::block(half.states, 0, k, H, 1);
  Var<T> bwd_i = ad::block(half.states, H, i, H, 1);
  Var<T> bwd_k = ad::block(half.states, H, k, H, 1);
  return ad::concat_rows({ad::sub(fwd_k, fwd_i), ad::sub(bwd_i, bwd_k)});
}

template <typename T>
Var<T> conflict_matrix(const std::vector<Span>& spans_x, const std::vector<Span>& spans_y,
                       const EncoderOutput<T>& encoder) {
  if (spans_x.empty() || spans_y.empty())
    throw Error("conflict_matrix: empty segmentation");
  std::vector<Var<T>> rx, ry;
  for (const Span& s : spans_x)
    rx.push_back(span_repr(encoder.x, s));
  for (const Span& s : spans_y)
    ry.push_back(span_repr(encoder.y, s));
  Var<T> cos = ad::cosine_matrix(ad::concat_cols<T>(std::span<const Var<T>>(rx)),
                                 ad::concat_cols<T>(std::span<const Var<T>>(ry)));
  ad::Tape<T>& tape = *cos.tape();
  Var<T> ones = tape.constant(Matrix<T>::Ones(cos.rows(), cos.cols()));
  return ad::scale(ad::add(cos, ones), T(0.5));
}

Eigen::MatrixXd conflict_values(const std::vector<Span>& spans_x, const std::vector<Span>& spans_y,
                                const Eigen::MatrixXd& states_x, const Eigen::MatrixXd& states_y,
                                int hidden) {
  if (spans_x.empty() || spans_y.empty())
    throw Error("conflict_values: empty segmentation");
  auto reprs = [hidden](const std::vector<Span>& spans, const Eigen::MatrixXd& st) {
    Eigen::MatrixXd r(2 * hidden, static_cast<Eigen::Index>(spans.size()));
    for (std::size_t k = 0; k < spans.size(); ++k) {
      const Span& s = spans[k];
      if (s.begin < 0 || s.end > st.cols() || s.begin >= s.end)
        throw Error("conflict_values: span out of range");
      const Eigen::Index i = s.begin, j = s.end - 1, c = static_cast<Eigen::Index>(k);
      r.col(c).head(hidden) = st.col(j).head(hidden) - st.col(i).head(hidden);
      r.col(c).tail(hidden) = st.col(i).tail(hidden) - st.col(j).tail(hidden);
    }
    return r;
  };
  Eigen::MatrixXd rx = reprs(spans_x, states_x), ry = reprs(spans_y, states_y);
  Eigen::MatrixXd f(rx.cols(), ry.cols());
  for (Eigen::Index u = 0; u < rx.cols(); ++u)
    for (Eigen::Index v = 0; v < ry.cols(); ++v) {
      const double nu = rx.col(u).norm(), nv = ry.col(v).norm();
      const double cos = (nu > 0 && nv > 0) ? rx.col(u).dot(ry.col(v)) / (nu * nv) : 0.0;
      f(u, v) = (cos + 1.0) / 2.0;
    }
  return f;
}

template <typename T>
Var<T> intention_probs(ad::Tape<T>& tape, ModelParams<T>& params, const Var<T>& span_vectors) {
  Var<T> w = tape.parameter(params.intent_w);
  Var<T> b = tape.parameter(params.intent_b);
  return ad::softmax_cols(ad::add_bias(ad::matmul(w, span_vectors), b));
}

template <typename T>
SplitNetOutput<T> run_splitnet(ad::Tape<T>& tape, ModelParams<T>& params, std::span<const Token> x,
                               std::span<const Token> y, std::mt19937_64* dropout_rng, T dropout) {
  if (x.empty() || y.empty())
    throw Error("run_splitnet: empty query");
  SplitNetOutput<T> out;
  Var<T> ex = embed(tape, params, x, QuerySide::Precedent, dropout_rng, dropout);
  Var<T> ey = embed(tape, params, y, QuerySide::Followup, dropout_rng, dropout);
  out.encoder.x = encode(tape, params, ex);
  out.encoder.y = encode(tape, params, ey);
  out.attention = attend(out.encoder.x, out.encoder.y);
  if (label_positions(x.size(), y.size()) > 0)
    out.probs = split_probs(tape, params, split_features(out.encoder.x, out.encoder.y, out.attention));
  return out;
}

// ---------------------------------------------------------------------------

#define STAR_INSTANTIATE(T)                                                                       \
  template struct ModelParams<T>;                                                                 \
  template Var<T> embed<T>(ad::Tape<T>&, ModelParams<T>&, std::span<const Token>, QuerySide,     \
                           std::mt19937_64*, T);                                                  \
  template EncoderHalf<T> encode<T>(ad::Tape<T>&, ModelParams<T>&, const Var<T>&);               \
  template AttentionOutput<T> attend<T>(const EncoderHalf<T>&, const EncoderHalf<T>&);           \
  template Var<T> split_features<T>(const EncoderHalf<T>&, const EncoderHalf<T>&,                \
                                    const AttentionOutput<T>&);                                   \
  template Var<T> split_probs<T>(ad::Tape<T>&, ModelParams<T>&, const Var<T>&);                  \
  template Var<T> span_repr<T>(const EncoderHalf<T>&, const Span&);                              \
  template Var<T> conflict_matrix<T>(const std::vector<Span>&, const std::vector<Span>&,         \
                                     const EncoderOutput<T>&);                                    \
  template Var<T> intention_probs<T>(ad::Tape<T>&, ModelParams<T>&, const Var<T>&);              \
  template SplitNetOutput<T> run_splitnet<T>(ad::Tape<T>&, ModelParams<T>&,                      \
                                             std::span<const Token>, std::span<const Token>,      \
                                             std::mt19937_64*, T);

STAR_INSTANTIATE(float)
STAR_INSTANTIATE(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace star
