#include "senti/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "senti/error.hpp"

namespace senti {

using nlohmann::json;

void W2vConfig::validate() const {
    if (window < 1) throw ConfigError("w2v.window must be >= 1");
    if (negatives < 1) throw ConfigError("w2v.negatives must be >= 1");
    if (dim < 1) throw ConfigError("w2v.dim must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("w2v.learning_rate must be > 0");
    if (!(min_learning_rate >= 0.0)) throw ConfigError("w2v.min_learning_rate must be >= 0");
    if (epochs < 0) throw ConfigError("w2v.epochs must be >= 0");
    if (subsample_threshold && !(*subsample_threshold > 0.0))
        throw ConfigError("w2v.subsample_threshold must be > 0");
}

double clamped_sigmoid(double x) noexcept {
    x = std::clamp(x, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-x));
}

double log_sigmoid(double x) noexcept {
    x = std::clamp(x, -30.0, 30.0);
    return -std::log1p(std::exp(-x));
}

std::vector<ContextWindow> extract_windows(std::span<const TokenId> ids, int window) {
    std::vector<ContextWindow> out;
    const auto n = static_cast<std::ptrdiff_t>(ids.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (ids[i] == kPadId) continue;
        ContextWindow w{ids[i], {}};
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - window); j <= std::min(n - 1, i + window); ++j)
            if (j != i && ids[j] != kPadId) w.context.push_back(ids[j]);
        if (!w.context.empty()) out.push_back(std::move(w));
    }
    return out;
}

NegativeSampler::NegativeSampler(std::span<const double> counts, double power) {
    probs_.assign(counts.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (static_cast<TokenId>(i) == kPadId || counts[i] <= 0.0) continue;
        probs_[i] = std::pow(counts[i], power);
        total += probs_[i];
    }
    if (!(total > 0.0)) throw DataError("negative sampler needs at least one non-PAD token with positive count");
    cumulative_.resize(probs_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        probs_[i] /= total;
        acc += probs_[i];
        cumulative_[i] = acc;
    }
    cumulative_.back() = 1.0;
}

TokenId NegativeSampler::draw(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    idx = std::min(idx, cumulative_.size() - 1);
    // Skip zero-mass ids that share a cumulative value with their predecessor.
    while (probs_[idx] == 0.0 && idx + 1 < probs_.size()) ++idx;
    return static_cast<TokenId>(idx);
}

TokenId NegativeSampler::draw_excluding(Rng& rng, TokenId exclude) const {
    const double own = exclude >= 0 && static_cast<std::size_t>(exclude) < probs_.size() ? probs_[exclude] : 0.0;
    if (own >= 1.0) return draw(rng);
    TokenId id;
    do id = draw(rng);
    while (id == exclude);
    return id;
}

double NegativeSampler::probability(TokenId id) const { return probs_.at(static_cast<std::size_t>(id)); }

namespace {

struct Target {
    TokenId id;
    double label;
};

std::vector<Target> targets_for(TokenId positive, std::span<const TokenId> negatives) {
    std::vector<Target> t;
    t.reserve(negatives.size() + 1);
    t.push_back({positive, 1.0});
    for (TokenId n : negatives) t.push_back({n, 0.0});
    return t;
}

double objective(const EmbeddingMatrix& m, const Eigen::VectorXd& hidden, const std::vector<Target>& targets) {
    double loss = 0.0;
    for (const auto& t : targets) {
        const double score = m.context_vectors.row(t.id).dot(hidden);
        loss -= t.label > 0.5 ? log_sigmoid(score) : log_sigmoid(-score);
    }
    return loss;
}

// Gradient w.r.t. the hidden vector and each distinct context row.
double backprop_targets(const EmbeddingMatrix& m, const Eigen::VectorXd& hidden, const std::vector<Target>& targets,
                        Eigen::VectorXd& grad_hidden, std::map<TokenId, Eigen::VectorXd>& context_grads) {
    grad_hidden = Eigen::VectorXd::Zero(hidden.size());
    double loss = 0.0;
    for (const auto& t : targets) {
        const auto u = m.context_vectors.row(t.id).transpose();
        const double score = u.dot(hidden);
        loss -= t.label > 0.5 ? log_sigmoid(score) : log_sigmoid(-score);
        const double g = clamped_sigmoid(score) - t.label;
        grad_hidden += g * u;
        auto [it, fresh] = context_grads.try_emplace(t.id, Eigen::VectorXd::Zero(hidden.size()));
        it->second += g * hidden;
    }
    return loss;
}

Eigen::VectorXd context_mean(const EmbeddingMatrix& m, std::span<const TokenId> context) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(m.dim());
    for (TokenId c : context) h += m.vectors.row(c).transpose();
    return h / static_cast<double>(context.size());
}

template <class Map>
std::vector<std::pair<TokenId, Eigen::VectorXd>> to_rows(Map&& map) {
    return {std::make_move_iterator(map.begin()), std::make_move_iterator(map.end())};
}

void apply(EmbeddingMatrix& m, const W2vGradient& g, double lr) {
    for (const auto& [id, row] : g.input_rows)
        if (id != kPadId) m.vectors.row(id) -= lr * row.transpose();
    for (const auto& [id, row] : g.context_rows)
        if (id != kPadId) m.context_vectors.row(id) -= lr * row.transpose();
}

}  // namespace

double cbow_loss(const EmbeddingMatrix& m, std::span<const TokenId> context, TokenId center,
                 std::span<const TokenId> negatives) {
    return objective(m, context_mean(m, context), targets_for(center, negatives));
}

W2vGradient cbow_gradient(const EmbeddingMatrix& m, std::span<const TokenId> context, TokenId center,
                          std::span<const TokenId> negatives) {
    const Eigen::VectorXd hidden = context_mean(m, context);
    Eigen::VectorXd grad_hidden;
    std::map<TokenId, Eigen::VectorXd> ctx;
    W2vGradient g;
    g.loss = backprop_targets(m, hidden, targets_for(center, negatives), grad_hidden, ctx);
    std::map<TokenId, Eigen::VectorXd> in;
    const Eigen::VectorXd share = grad_hidden / static_cast<double>(context.size());
    for (TokenId c : context) {
        auto [it, fresh] = in.try_emplace(c, Eigen::VectorXd::Zero(m.dim()));
        it->second += share;
    }
    g.input_rows = to_rows(in);
    g.context_rows = to_rows(ctx);
    return g;
}

double cbow_step(std::span<const TokenId> context, TokenId center, std::span<const TokenId> negatives,
                 EmbeddingMatrix& m, double lr) {
    const auto g = cbow_gradient(m, context, center, negatives);
    apply(m, g, lr);
    return g.loss;
}

double skipgram_loss(const EmbeddingMatrix& m, TokenId center, TokenId context, std::span<const TokenId> negatives) {
    return objective(m, m.vectors.row(center).transpose(), targets_for(context, negatives));
}

W2vGradient skipgram_gradient(const EmbeddingMatrix& m, TokenId center, TokenId context,
                              std::span<const TokenId> negatives) {
    const Eigen::VectorXd hidden = m.vectors.row(center).transpose();
    Eigen::VectorXd grad_hidden;
    std::map<TokenId, Eigen::VectorXd> ctx;
    W2vGradient g;
    g.loss = backprop_targets(m, hidden, targets_for(context, negatives), grad_hidden, ctx);
    g.input_rows.emplace_back(center, std::move(grad_hidden));
    g.context_rows = to_rows(ctx);
    return g;
}

double skipgram_step(TokenId center, TokenId context, std::span<const TokenId> negatives, EmbeddingMatrix& m,
                     double lr) {
    const auto g = skipgram_gradient(m, center, context, negatives);
    apply(m, g, lr);
    return g.loss;
}

EmbeddingMatrix init_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
    const auto rows = static_cast<Eigen::Index>(vocab.size());
    EmbeddingMatrix m;
    m.vocab_hash = vocab.hash();
    m.vectors = RowMatrix::Zero(rows, dim);
    m.context_vectors = RowMatrix::Zero(rows, dim);
    auto rng = substream(seed, "w2v-init");
    const double half = 0.5 / dim;
    for (Eigen::Index r = 1; r < rows; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) m.vectors(r, c) = (2.0 * uniform01(rng) - 1.0) * half;
    return m;
}

std::vector<std::vector<TokenId>> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                const std::set<char32_t>& stop_chars) {
    std::vector<std::vector<TokenId>> out;
    out.reserve(corpus.size());
    for (const auto& r : corpus.reviews) {
        std::vector<TokenId> ids;
        for (const auto& tok : segment_chars(r.text, stop_chars)) ids.push_back(vocab.id(tok));
        out.push_back(std::move(ids));
    }
    return out;
}

EmbeddingMatrix train_embeddings(const std::vector<std::vector<TokenId>>& sentences, const Vocabulary& vocab,
                                 const W2vConfig& config, std::vector<double>* epoch_losses) {
    config.validate();
    std::vector<double> counts(vocab.size(), 0.0);
    double total_tokens = 0.0;
    for (const auto& s : sentences)
        for (TokenId id : s) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
                throw DataError("token id out of vocabulary range: " + std::to_string(id));
            if (id == kPadId) continue;
            counts[static_cast<std::size_t>(id)] += 1.0;
            total_tokens += 1.0;
        }
    if (sentences.empty() || total_tokens == 0.0) throw DataError("cannot train embeddings on an empty corpus");

    EmbeddingMatrix m = init_embeddings(vocab, config.dim, config.seed);
    if (epoch_losses) epoch_losses->clear();
    if (config.epochs == 0) return m;

    const NegativeSampler sampler(counts);
    auto neg_rng = substream(config.seed, "negatives");
    auto sub_rng = substream(config.seed, "subsample");
    const double planned = total_tokens * config.epochs;
    double processed = 0.0;
    std::vector<TokenId> negatives(static_cast<std::size_t>(config.negatives));
    std::vector<TokenId> kept;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        for (const auto& sentence : sentences) {
            std::span<const TokenId> ids(sentence);
            if (config.subsample_threshold) {
                const double t = *config.subsample_threshold;
                kept.clear();
                for (TokenId id : sentence) {
                    if (id == kPadId) continue;
                    const double f = counts[static_cast<std::size_t>(id)] / total_tokens;
                    const double keep = std::min(1.0, (std::sqrt(f / t) + 1.0) * t / f);
                    if (uniform01(sub_rng) < keep) kept.push_back(id);
                }
                ids = kept;
            }
            for (const auto& w : extract_windows(ids, config.window)) {
                const double lr = std::max(config.min_learning_rate,
                                           config.learning_rate -
                                               (config.learning_rate - config.min_learning_rate) * processed / planned);
                processed += 1.0;
                if (config.mode == W2vMode::Cbow) {
                    for (auto& n : negatives) n = sampler.draw_excluding(neg_rng, w.center);
                    loss_sum += cbow_step(w.context, w.center, negatives, m, lr);
                    ++loss_n;
                } else {
                    for (TokenId c : w.context) {
                        for (auto& n : negatives) n = sampler.draw_excluding(neg_rng, c);
                        loss_sum += skipgram_step(w.center, c, negatives, m, lr);
                        ++loss_n;
                    }
                }
            }
        }
        if (epoch_losses) epoch_losses->push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    }
    if (!m.vectors.allFinite()) throw NumericalError("embedding training produced non-finite values");
    return m;
}

double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

std::vector<Neighbor> nearest_neighbors(const std::string& token, std::size_t k, const EmbeddingMatrix& m,
                                        const Vocabulary& vocab) {
    if (!vocab.contains(token)) throw DataError("token not in vocabulary: " + token);
    if (static_cast<std::size_t>(m.rows()) != vocab.size() || m.vocab_hash != vocab.hash())
        throw DataError("embedding matrix does not match vocabulary");
    const TokenId q = vocab.id(token);
    const Eigen::VectorXd query = m.vectors.row(q).transpose();
    if (query.norm() == 0.0) throw DataError("query vector has zero norm: " + token);

    std::vector<Neighbor> all;
    for (TokenId id = 2; id < static_cast<TokenId>(m.rows()); ++id) {
        if (id == q) continue;
        all.push_back({vocab.token(id), id, cosine(query, m.vectors.row(id).transpose())});
    }
    std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.cosine != b.cosine) return a.cosine > b.cosine;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m, const Vocabulary& vocab,
                     EmbeddingFormat format) {
    if (static_cast<std::size_t>(m.rows()) != vocab.size()) throw DataError("embedding rows do not match vocabulary");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    if (format == EmbeddingFormat::Json) {
        json j;
        j["format"] = "W2V1";
        j["rows"] = m.rows();
        j["dim"] = m.dim();
        j["vocab_hash"] = hash_hex(m.vocab_hash);
        j["vectors"] = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::vector<float> row(static_cast<std::size_t>(m.dim()));
            for (Eigen::Index c = 0; c < m.dim(); ++c) row[c] = static_cast<float>(m.vectors(r, c));
            j["vectors"].push_back({{"token", vocab.token(static_cast<TokenId>(r))}, {"vector", row}});
        }
        out << j.dump() << '\n';
        return;
    }
    out << "W2V1 " << m.rows() << ' ' << m.dim() << ' ' << hash_hex(m.vocab_hash) << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << vocab.token(static_cast<TokenId>(r)) << ' ';
        for (Eigen::Index c = 0; c < m.dim(); ++c) detail::write_f32(out, m.vectors(r, c));
        out << '\n';
    }
}

namespace {

void check_binding(const std::filesystem::path& path, const EmbeddingMatrix& m, const std::vector<std::string>& tokens,
                   const Vocabulary& vocab) {
    if (static_cast<std::size_t>(m.rows()) != vocab.size())
        throw DataError(path.string() + ": embedding has " + std::to_string(m.rows()) + " rows, vocabulary has " +
                        std::to_string(vocab.size()));
    if (m.vocab_hash != vocab.hash()) throw DataError(path.string() + ": embedding vocab_hash does not match vocabulary");
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] != vocab.token(static_cast<TokenId>(i)))
            throw DataError(path.string() + ": row " + std::to_string(i) + " token mismatch");
    if (!m.vectors.row(kPadId).isZero(0.0)) throw DataError(path.string() + ": PAD row must be zero");
    if (!m.vectors.allFinite()) throw DataError(path.string() + ": non-finite embedding entries");
}

}  // namespace

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    EmbeddingMatrix m;
    std::vector<std::string> tokens;

    if (in.peek() == '{') {
        json j;
        try {
            j = json::parse(in);
            if (j.at("format") != "W2V1") throw DataError(path.string() + ": bad embedding format tag");
            const auto rows = j.at("rows").get<Eigen::Index>();
            const auto dim = j.at("dim").get<Eigen::Index>();
            m.vocab_hash = parse_hash_hex(j.at("vocab_hash").get<std::string>());
            m.vectors = RowMatrix::Zero(rows, dim);
            const auto& vecs = j.at("vectors");
            if (static_cast<Eigen::Index>(vecs.size()) != rows) throw DataError(path.string() + ": row count mismatch");
            for (Eigen::Index r = 0; r < rows; ++r) {
                tokens.push_back(vecs[r].at("token").get<std::string>());
                const auto row = vecs[r].at("vector").get<std::vector<float>>();
                if (static_cast<Eigen::Index>(row.size()) != dim) throw DataError(path.string() + ": row width mismatch");
                for (Eigen::Index c = 0; c < dim; ++c) m.vectors(r, c) = row[c];
            }
        } catch (const json::exception& e) {
            throw DataError(path.string() + ": malformed JSON embedding file: " + e.what());
        }
    } else {
        std::string header;
        std::getline(in, header);
        std::istringstream hs(header);
        std::string magic, hash;
        Eigen::Index rows = -1, dim = -1;
        hs >> magic >> rows >> dim >> hash;
        if (magic != "W2V1") throw DataError(path.string() + ": bad magic, not a W2V1 embedding file");
        if (!hs || rows < 0 || dim < 1) throw DataError(path.string() + ": malformed W2V1 header");
        m.vocab_hash = parse_hash_hex(hash);
        m.vectors = RowMatrix::Zero(rows, dim);
        for (Eigen::Index r = 0; r < rows; ++r) {
            std::string tok;
            if (!std::getline(in, tok, ' ')) throw DataError(path.string() + ": truncated at row " + std::to_string(r));
            tokens.push_back(tok);
            for (Eigen::Index c = 0; c < dim; ++c) {
                double v;
                if (!detail::read_f32(in, v)) throw DataError(path.string() + ": truncated at row " + std::to_string(r));
                m.vectors(r, c) = v;
            }
            if (in.get() != '\n') throw DataError(path.string() + ": missing row terminator at row " + std::to_string(r));
        }
    }
    m.context_vectors = RowMatrix::Zero(m.vectors.rows(), m.vectors.cols());
    check_binding(path, m, tokens, vocab);
    return m;
}

}  // namespace senti
