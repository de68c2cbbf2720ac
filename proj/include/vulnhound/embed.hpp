#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vulnhound/error.hpp"
#include "vulnhound/pylex.hpp"

namespace vulnhound::embed {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::string_view kUnknownToken = "<UNK>";

struct SgConfig {
  std::size_t dim = 100;
  std::size_t window = 5;  // context radius
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;  // decays linearly to min_learning_rate
  double min_learning_rate = 1e-4;
  std::size_t min_count = 2;
  std::uint64_t seed = 1;

  void validate() const;
};

// Vocabulary plus center (input) and context (output) vectors, one row per
// word. Row 0 is the reserved unknown-token entry.
struct EmbeddingTable {
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  RowMatrix input;
  RowMatrix output;

  std::size_t dim() const { return static_cast<std::size_t>(input.cols()); }
  std::size_t size() const { return words.size(); }
  std::size_t lookup(std::string_view word) const;
  void rebuild_index();

  bool operator==(const EmbeddingTable& o) const {
    return words == o.words && counts == o.counts && input == o.input && output == o.output;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

class DegenerateCorpusError : public DataError {
 public:
  using DataError::DataError;
};

// Numerically stable log(sigmoid(x)).
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  using std::exp;
  using std::log1p;
  return x >= Scalar(0) ? -log1p(exp(-x)) : x - log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

// Negative-sampling loss for one (center, context) pair:
//   -log s(u_o . v_c) - sum_j log s(-u_j . v_c)
// `negatives` holds one sampled context vector per row.
template <typename DC, typename DO, typename DN>
typename DC::Scalar pair_loss(const Eigen::MatrixBase<DC>& center, const Eigen::MatrixBase<DO>& context,
                              const Eigen::MatrixBase<DN>& negatives) {
  using Scalar = typename DC::Scalar;
  Scalar loss = -log_sigmoid<Scalar>(context.dot(center));
  for (Eigen::Index j = 0; j < negatives.rows(); ++j)
    loss -= log_sigmoid<Scalar>(-negatives.row(j).transpose().dot(center));
  return loss;
}

struct PairGradient {
  Eigen::VectorXd center;
  Eigen::VectorXd context;
  Eigen::MatrixXd negatives;
};

PairGradient pair_loss_gradient(const Eigen::Ref<const Eigen::VectorXd>& center,
                                const Eigen::Ref<const Eigen::VectorXd>& context,
                                const Eigen::Ref<const Eigen::MatrixXd>& negatives);

// Skip-gram with negative sampling over token sentences. Deterministic for a
// fixed seed; single-threaded.
EmbeddingTable train_skipgram(const std::vector<std::vector<std::string>>& corpus, const SgConfig& config);

template <typename DA, typename DB>
double cosine(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0 ? a.dot(b) / denom : 0.0;
}

// Per-occurrence vectors aligned to byte spans of one file.
struct VectorEntry {
  std::string token;
  Span span;
  Eigen::VectorXf vector;

  bool operator==(const VectorEntry& o) const {
    return token == o.token && span == o.span && vector.size() == o.vector.size() &&
           (vector.size() == 0 ||
            std::memcmp(vector.data(), o.vector.data(), sizeof(float) * static_cast<std::size_t>(vector.size())) == 0);
  }
};

struct VectorSequence {
  std::string path;
  std::string provider = "external";
  std::uint32_t dim = 0;
  std::vector<VectorEntry> entries;

  bool operator==(const VectorSequence& o) const {
    return path == o.path && dim == o.dim && entries == o.entries;
  }
};

// Center vectors narrowed to binary32; unknown tokens get the UNK row.
VectorSequence embed_stream(const pylex::TokenStream& stream, const EmbeddingTable& table, std::string path = {});

// Lexical view of a vector sequence, for windowing external vectors.
pylex::TokenStream as_token_stream(const VectorSequence& seq);

// One sentence of vocabulary keys per stream.
std::vector<std::string> sentence(const pylex::TokenStream& stream);

}  // namespace vulnhound::embed
