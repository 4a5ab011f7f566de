#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "senti/rng.hpp"
#include "senti/tokenizer.hpp"

namespace senti {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingMatrix {
    RowMatrix vectors;          // input embeddings, one row per token id
    RowMatrix context_vectors;  // output-side embeddings, training only
    std::uint64_t vocab_hash = 0;

    Eigen::Index rows() const noexcept { return vectors.rows(); }
    Eigen::Index dim() const noexcept { return vectors.cols(); }
};

enum class W2vMode { Cbow, SkipGram };

struct W2vConfig {
    W2vMode mode = W2vMode::Cbow;
    int window = 4;
    int negatives = 5;
    double learning_rate = 0.025;
    double min_learning_rate = 1e-4;  // linear decay target
    int epochs = 5;
    int dim = 300;
    std::uint64_t seed = 1;
    std::optional<double> subsample_threshold;

    void validate() const;
};

/// Sigmoid with its argument clipped to [-30, 30].
double clamped_sigmoid(double x) noexcept;

/// ln(sigmoid(x)) on the same clipped argument.
double log_sigmoid(double x) noexcept;

struct ContextWindow {
    TokenId center;
    std::vector<TokenId> context;

    friend bool operator==(const ContextWindow&, const ContextWindow&) = default;
};

/// One record per non-PAD position with a non-empty context of non-PAD
/// neighbours within `window` positions.
std::vector<ContextWindow> extract_windows(std::span<const TokenId> ids, int window);

/// Draws ids from counts^(3/4). PAD is never drawn.
class NegativeSampler {
public:
    NegativeSampler(std::span<const double> counts, double power = 0.75);

    TokenId draw(Rng& rng) const;
    /// Redraws until the result differs from `exclude` (if any other id has mass).
    TokenId draw_excluding(Rng& rng, TokenId exclude) const;
    double probability(TokenId id) const;
    std::size_t size() const noexcept { return probs_.size(); }

private:
    std::vector<double> cumulative_;
    std::vector<double> probs_;
};

/// Sparse gradient of a negative-sampling objective, one entry per distinct row.
struct W2vGradient {
    double loss = 0.0;
    std::vector<std::pair<TokenId, Eigen::VectorXd>> input_rows;
    std::vector<std::pair<TokenId, Eigen::VectorXd>> context_rows;
};

double cbow_loss(const EmbeddingMatrix& m, std::span<const TokenId> context, TokenId center,
                 std::span<const TokenId> negatives);
W2vGradient cbow_gradient(const EmbeddingMatrix& m, std::span<const TokenId> context, TokenId center,
                          std::span<const TokenId> negatives);
/// One SGD step on the CBOW objective; returns the loss before the update.
double cbow_step(std::span<const TokenId> context, TokenId center, std::span<const TokenId> negatives,
                 EmbeddingMatrix& m, double lr);

double skipgram_loss(const EmbeddingMatrix& m, TokenId center, TokenId context, std::span<const TokenId> negatives);
W2vGradient skipgram_gradient(const EmbeddingMatrix& m, TokenId center, TokenId context,
                              std::span<const TokenId> negatives);
double skipgram_step(TokenId center, TokenId context, std::span<const TokenId> negatives, EmbeddingMatrix& m,
                     double lr);

/// Seeded uniform [-0.5/d, 0.5/d] input rows, zero context rows, zero PAD row.
EmbeddingMatrix init_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed);

/// Sequential, deterministic Word2Vec training over already-encoded sentences.
/// `epoch_losses`, when given, receives the mean objective of each epoch.
EmbeddingMatrix train_embeddings(const std::vector<std::vector<TokenId>>& sentences, const Vocabulary& vocab,
                                 const W2vConfig& config, std::vector<double>* epoch_losses = nullptr);

/// Encodes every review without truncation (for embedding training).
std::vector<std::vector<TokenId>> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                const std::set<char32_t>& stop_chars = {});

struct Neighbor {
    std::string token;
    TokenId id;
    double cosine;
};

std::vector<Neighbor> nearest_neighbors(const std::string& token, std::size_t k, const EmbeddingMatrix& m,
                                        const Vocabulary& vocab);

double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

enum class EmbeddingFormat { Binary, Json };

/// Header line "W2V1 <rows> <dim> <hash>" then per row: token, space, dim LE float32, newline.
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m, const Vocabulary& vocab,
                     EmbeddingFormat format = EmbeddingFormat::Binary);

/// Reads either format. Throws DataError on a bad magic or when the stored
/// tokens or hash disagree with `vocab`.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace senti
