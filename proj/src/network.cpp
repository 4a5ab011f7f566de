#include "senti/network.hpp"

#include <cmath>

#include "senti/rng.hpp"

namespace senti {

LstmParams<double> init_lstm_params(Eigen::Index hidden, Eigen::Index input_dim, std::uint64_t seed) {
    if (hidden < 1 || input_dim < 1) throw ConfigError("hidden and input sizes must be >= 1");
    auto p = LstmParams<double>::zeros(hidden, input_dim);
    auto rng = substream(seed, "init");
    auto glorot = [&](auto& m, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
    };
    for (auto* g : {&p.forget, &p.input, &p.output, &p.candidate})
        glorot(g->weights, static_cast<double>(hidden + input_dim), static_cast<double>(hidden));
    glorot(p.readout_weights, static_cast<double>(hidden), 1.0);
    p.forget.bias.setConstant(1.0);
    return p;
}

void Model::check_consistency() const {
    if (embeddings.vocab_hash != vocab.hash()) throw DataError("model embeddings are bound to a different vocabulary");
    if (static_cast<std::size_t>(embeddings.rows()) != vocab.size())
        throw DataError("model embedding rows do not match the vocabulary size");
    if (embeddings.dim() != params.input_dim())
        throw DataError("model embedding dimension " + std::to_string(embeddings.dim()) +
                        " does not match LSTM input size " + std::to_string(params.input_dim()));
    if (max_len < 1) throw DataError("model max_len must be >= 1");
}

Model make_model(Vocabulary vocab, EmbeddingMatrix embeddings, Eigen::Index hidden, std::uint64_t seed) {
    Model m;
    m.params = init_lstm_params(hidden, embeddings.dim(), seed);
    m.vocab = std::move(vocab);
    m.embeddings = std::move(embeddings);
    m.check_consistency();
    return m;
}

Eigen::MatrixXd gather_inputs(const TokenSequence& seq, const Model& model) {
    const auto rows = static_cast<TokenId>(model.embeddings.rows());
    Eigen::MatrixXd x(model.embeddings.dim(), static_cast<Eigen::Index>(seq.true_length));
    for (std::size_t t = 0; t < seq.true_length; ++t) {
        const TokenId id = seq.ids[t];
        if (id < 0 || id >= rows) throw DataError("token id " + std::to_string(id) + " is outside the model vocabulary");
        x.col(static_cast<Eigen::Index>(t)) = model.embeddings.vectors.row(id).transpose();
    }
    return x;
}

SequenceCache<double> sequence_forward(const TokenSequence& seq, const Model& model,
                                       const std::optional<Eigen::VectorXd>& dropout_mask) {
    if (seq.true_length == 0) throw DataError("sequence_forward: sequence has no tokens");
    if (seq.true_length > seq.ids.size()) throw DataError("sequence_forward: true_length exceeds sequence");
    return forward_sequence(model.params, gather_inputs(seq, model), dropout_mask);
}

TokenSequence prepare_text(std::string_view text, const Model& model) {
    const auto cleaned = clean_text(text, model.cleaning);
    return encode(segment_chars(cleaned, model.stop_chars), model.vocab, model.max_len);
}

Prediction predict(std::string_view text, const Model& model, std::optional<double> threshold) {
    const auto seq = prepare_text(text, model);
    if (seq.true_length == 0) throw DataError("empty input");
    const double p = sequence_forward(seq, model).p;
    return {p >= threshold.value_or(model.threshold) ? 1 : 0, p};
}

}  // namespace senti
