#pragma once

#include <random>
#include <span>
#include <vector>

#include "star/autograd.hpp"
#include "star/span.hpp"
#include "star/text.hpp"

namespace star {

enum class QuerySide { Precedent, Followup };

struct ModelDims {
  int char_dim = 16;
  int char_channels = 30;
  int char_width = 3;
  int word_dim = 100;
  int hidden = 100;  // per direction
  int intentions = 3;

  int embed_dim() const { return char_channels + word_dim + 2; }
  int state_dim() const { return 2 * hidden; }
  int feature_dim() const { return 3 * state_dim(); }

  bool operator==(const ModelDims&) const = default;
};

/// Which loss paths read a parameter. Shared parameters (embeddings and the
/// recurrent encoder) feed both the split probabilities and the conflict
/// matrix.
enum class ParamGroup { Shared, SplitOnly, IntentionOnly };

template <typename T>
struct ModelParams {
  ModelDims dims;

  ad::Parameter<T> char_emb;  // chars x char_dim
  ad::Parameter<T> conv_w;    // channels x (width * char_dim)
  ad::Parameter<T> conv_b;    // channels x 1
  ad::Parameter<T> word_emb;  // words x word_dim

  // LSTM weights, gate order i, f, g, o; shared by both queries.
  ad::Parameter<T> fwd_wx, fwd_wh, fwd_b;
  ad::Parameter<T> bwd_wx, bwd_wh, bwd_b;

  ad::Parameter<T> out_w;  // 1 x feature_dim
  ad::Parameter<T> out_b;  // 1 x 1

  ad::Parameter<T> intent_w;  // intentions x state_dim
  ad::Parameter<T> intent_b;  // intentions x 1

  static ModelParams init(const ModelDims& dims, std::size_t words, std::size_t chars,
                          std::mt19937_64& rng);

  std::vector<ad::Parameter<T>*> all();
  std::vector<const ad::Parameter<T>*> all() const;
  std::vector<ad::Parameter<T>*> group(ParamGroup g);
  static ParamGroup group_of(const std::string& name);

  void zero_grad();
  std::size_t parameter_count() const;

  template <typename U>
  ModelParams<U> cast() const;
};

template <typename T>
struct EncoderHalf {
  ad::Var<T> states;  // state_dim x length, rows [forward; backward]
  int hidden = 0;
  int length() const { return static_cast<int>(states.cols()); }
};

template <typename T>
struct EncoderOutput {
  EncoderHalf<T> x;  // H
  EncoderHalf<T> y;  // U
};

template <typename T>
struct AttentionOutput {
  ad::Var<T> similarity;     // A, n x m
  ad::Var<T> followup_aware;  // h~, state_dim x n
  ad::Var<T> precedent_aware; // u~, state_dim x m
};

/// Per-token [char-CNN; word; side one-hot], embed_dim x n. `dropout_rng`
/// enables train mode: one variational mask per sequence over the char and
/// word parts.
template <typename T>
ad::Var<T> embed(ad::Tape<T>& tape, ModelParams<T>& params, std::span<const Token> tokens,
                 QuerySide side, std::mt19937_64* dropout_rng = nullptr, T dropout = T(0.5));

/// Bidirectional LSTM with zero initial states.
template <typename T>
EncoderHalf<T> encode(ad::Tape<T>& tape, ModelParams<T>& params, const ad::Var<T>& embedded);

template <typename T>
AttentionOutput<T> attend(const EncoderHalf<T>& h, const EncoderHalf<T>& u);

/// feature_dim x T, T = (n-1) + (m-1).
template <typename T>
ad::Var<T> split_features(const EncoderHalf<T>& h, const EncoderHalf<T>& u,
                          const AttentionOutput<T>& attention);

/// 1 x T row of Split probabilities.
template <typename T>
ad::Var<T> split_probs(ad::Tape<T>& tape, ModelParams<T>& params, const ad::Var<T>& features);

/// [fwd_k - fwd_i; bwd_i - bwd_k] for the span's first (i) and last (k)
/// tokens.
template <typename T>
ad::Var<T> span_repr(const EncoderHalf<T>& half, const Span& span);

/// F(u, v) = (cos(r_u, r_v) + 1) / 2.
template <typename T>
ad::Var<T> conflict_matrix(const std::vector<Span>& spans_x, const std::vector<Span>& spans_y,
                           const EncoderOutput<T>& encoder);

/// Value-only conflict matrix from encoder states (state_dim x length
/// each). Matches conflict_matrix() without touching a tape.
Eigen::MatrixXd conflict_values(const std::vector<Span>& spans_x, const std::vector<Span>& spans_y,
                                const Eigen::MatrixXd& states_x, const Eigen::MatrixXd& states_y,
                                int hidden);

/// Intention distribution for each column of `span_vectors`; intentions x K.
template <typename T>
ad::Var<T> intention_probs(ad::Tape<T>& tape, ModelParams<T>& params,
                           const ad::Var<T>& span_vectors);

/// Everything one SplitNet pass produces.
template <typename T>
struct SplitNetOutput {
  EncoderOutput<T> encoder;
  AttentionOutput<T> attention;
  ad::Var<T> probs;  // invalid when T == 0
};

template <typename T>
SplitNetOutput<T> run_splitnet(ad::Tape<T>& tape, ModelParams<T>& params,
                               std::span<const Token> x, std::span<const Token> y,
                               std::mt19937_64* dropout_rng = nullptr, T dropout = T(0.5));

}  // namespace star
