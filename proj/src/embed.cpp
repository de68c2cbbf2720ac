#include "vulnhound/embed.hpp"

#include <algorithm>
#include <map>

#include "vulnhound/random.hpp"

namespace vulnhound::embed {

namespace {

constexpr std::size_t kNegativeTableSize = 1'000'000;

}  // namespace

void SgConfig::validate() const {
  if (dim == 0 || window == 0 || negatives == 0 || epochs == 0 || min_count == 0)
    throw UsageError("skip-gram dim, window, negatives, epochs and min_count must be positive");
  if (!(learning_rate > 0) || !(min_learning_rate > 0) || min_learning_rate > learning_rate)
    throw UsageError("skip-gram learning rates must be positive with min <= initial");
}

std::size_t EmbeddingTable::lookup(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? 0 : it->second;
}

void EmbeddingTable::rebuild_index() {
  index_.clear();
  for (std::size_t i = 1; i < words.size(); ++i) index_.emplace(words[i], i);
}

PairGradient pair_loss_gradient(const Eigen::Ref<const Eigen::VectorXd>& center,
                                const Eigen::Ref<const Eigen::VectorXd>& context,
                                const Eigen::Ref<const Eigen::MatrixXd>& negatives) {
  PairGradient g;
  const double pos = sigmoid(context.dot(center)) - 1.0;
  g.center = pos * context;
  g.context = pos * center;
  g.negatives.resize(negatives.rows(), negatives.cols());
  for (Eigen::Index j = 0; j < negatives.rows(); ++j) {
    const double s = sigmoid(negatives.row(j).dot(center));
    g.center += s * negatives.row(j).transpose();
    g.negatives.row(j) = s * center.transpose();
  }
  return g;
}

EmbeddingTable train_skipgram(const std::vector<std::vector<std::string>>& corpus, const SgConfig& config) {
  config.validate();
  std::map<std::string, std::uint64_t> freq;
  std::uint64_t total_tokens = 0;
  for (const auto& s : corpus) {
    for (const auto& w : s) ++freq[w];
    total_tokens += s.size();
  }

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  std::uint64_t rare = 0;
  for (const auto& [w, c] : freq) {
    if (c >= config.min_count && w != kUnknownToken) kept.emplace_back(w, c);
    else rare += c;
  }
  if (kept.size() < 2)
    throw DegenerateCorpusError("skip-gram corpus has " + std::to_string(kept.size()) +
                                " distinct tokens after min-count filtering; need at least 2");
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  EmbeddingTable table;
  table.words.emplace_back(kUnknownToken);
  table.counts.push_back(rare);
  for (auto& [w, c] : kept) {
    table.words.push_back(w);
    table.counts.push_back(c);
  }
  table.rebuild_index();

  const auto vocab = static_cast<Eigen::Index>(table.size());
  const auto dim = static_cast<Eigen::Index>(config.dim);
  Rng rng(config.seed);
  table.input.resize(vocab, dim);
  const double scale = 0.5 / static_cast<double>(dim);
  for (Eigen::Index r = 0; r < vocab; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) table.input(r, c) = rng.uniform(-scale, scale);
  table.output = RowMatrix::Zero(vocab, dim);

  // Unigram^0.75 sampling table over known words (UNK is never a negative).
  std::vector<std::uint32_t> negative_table(kNegativeTableSize);
  {
    double norm = 0;
    for (std::size_t i = 1; i < table.size(); ++i) norm += std::pow(static_cast<double>(table.counts[i]), 0.75);
    std::size_t word = 1;
    double cumulative = std::pow(static_cast<double>(table.counts[word]), 0.75) / norm;
    for (std::size_t a = 0; a < kNegativeTableSize; ++a) {
      negative_table[a] = static_cast<std::uint32_t>(word);
      if (static_cast<double>(a + 1) / kNegativeTableSize > cumulative && word + 1 < table.size()) {
        ++word;
        cumulative += std::pow(static_cast<double>(table.counts[word]), 0.75) / norm;
      }
    }
  }

  std::vector<std::vector<std::uint32_t>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<std::uint32_t> ids;
    ids.reserve(s.size());
    for (const auto& w : s) ids.push_back(static_cast<std::uint32_t>(table.lookup(w)));
    encoded.push_back(std::move(ids));
  }

  const double total_steps = static_cast<double>(config.epochs) * static_cast<double>(std::max<std::uint64_t>(total_tokens, 1));
  std::uint64_t step = 0;
  Eigen::VectorXd center_grad(dim);
  const auto radius = static_cast<std::ptrdiff_t>(config.window);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& ids : encoded) {
      const auto n = static_cast<std::ptrdiff_t>(ids.size());
      for (std::ptrdiff_t pos = 0; pos < n; ++pos, ++step) {
        const double progress = static_cast<double>(step) / total_steps;
        const double lr = std::max(config.min_learning_rate,
                                   config.learning_rate - (config.learning_rate - config.min_learning_rate) * progress);
        const auto center = ids[pos];
        for (std::ptrdiff_t ctx = std::max<std::ptrdiff_t>(0, pos - radius); ctx <= std::min(n - 1, pos + radius);
             ++ctx) {
          if (ctx == pos) continue;
          const auto context = ids[ctx];
          auto v_c = table.input.row(center);
          center_grad.setZero();
          // Positive pair, then k negatives; each term is an SGD step on the
          // context vector and accumulates into the center gradient.
          for (std::size_t k = 0; k <= config.negatives; ++k) {
            std::uint32_t target = context;
            double label = 1.0;
            if (k > 0) {
              target = negative_table[rng.index(kNegativeTableSize)];
              if (target == context) continue;
              label = 0.0;
            }
            auto u = table.output.row(target);
            const double g = sigmoid(u.dot(v_c)) - label;
            center_grad.noalias() += g * u.transpose();
            u.noalias() -= lr * g * v_c;
          }
          v_c.noalias() -= lr * center_grad.transpose();
        }
      }
    }
  }
  return table;
}

VectorSequence embed_stream(const pylex::TokenStream& stream, const EmbeddingTable& table, std::string path) {
  VectorSequence seq;
  seq.path = std::move(path);
  seq.provider = "skipgram";
  seq.dim = static_cast<std::uint32_t>(table.dim());
  seq.entries.reserve(stream.tokens.size());
  for (const auto& tok : stream.tokens) {
    const std::string key = pylex::token_key(tok);
    const std::size_t row = table.lookup(key);
    seq.entries.push_back(VectorEntry{key, tok.span, table.input.row(static_cast<Eigen::Index>(row)).transpose().cast<float>()});
  }
  return seq;
}

pylex::TokenStream as_token_stream(const VectorSequence& seq) {
  pylex::TokenStream stream;
  stream.tokens.reserve(seq.entries.size());
  for (const auto& e : seq.entries) {
    stream.tokens.push_back(pylex::Token{e.token, pylex::TokenKind::Identifier, e.span});
    stream.source_len = std::max<std::size_t>(stream.source_len, e.span.end);
  }
  return stream;
}

std::vector<std::string> sentence(const pylex::TokenStream& stream) {
  std::vector<std::string> out;
  out.reserve(stream.tokens.size());
  for (const auto& t : stream.tokens) out.push_back(pylex::token_key(t));
  return out;
}

}  // namespace vulnhound::embed
