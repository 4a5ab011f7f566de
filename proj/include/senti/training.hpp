#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "senti/network.hpp"

namespace senti {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 30;
    int batch_size = 32;
    double dropout_rate = 0.5;
    int patience = 3;  // epochs without a new validation-loss minimum
    std::uint64_t seed = 1;
    bool freeze_embeddings = false;

    void validate() const;
};

inline constexpr double kProbClamp = 1e-12;

/// Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
double bce_loss(double p, Label y);

template <class Scalar>
struct SequenceGradients {
    LstmParams<Scalar> params;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> inputs;  // input_dim x T, one column per step
};

/// Backpropagation through time for a single sequence, given dL/dlogit.
template <class Scalar>
SequenceGradients<Scalar> backward_sequence(const SequenceCache<Scalar>& cache, const LstmParams<Scalar>& params,
                                            Scalar dlogit) {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Eigen::Index hidden = params.hidden();
    const Eigen::Index input_dim = params.input_dim();
    const auto steps = static_cast<Eigen::Index>(cache.steps.size());

    SequenceGradients<Scalar> g;
    g.params = LstmParams<Scalar>::zeros(hidden, input_dim);
    g.inputs.setZero(input_dim, steps);
    g.params.readout_weights = dlogit * cache.h_readout.transpose();
    g.params.readout_bias = dlogit;

    Vector dh = params.readout_weights.transpose() * dlogit;
    if (cache.dropout_mask) dh = dh.cwiseProduct(*cache.dropout_mask);
    Vector dc = Vector::Zero(hidden);
    Vector concat(hidden + input_dim);

    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto& s = cache.steps[static_cast<std::size_t>(t)];
        const Vector d_out = dh.cwiseProduct(s.tanh_c);
        dc += (dh.array() * s.output.array() * (Scalar(1) - s.tanh_c.array().square())).matrix();

        const Vector dz_f = (dc.array() * s.c_prev.array() * s.forget.array() * (Scalar(1) - s.forget.array())).matrix();
        const Vector dz_i = (dc.array() * s.candidate.array() * s.input.array() * (Scalar(1) - s.input.array())).matrix();
        const Vector dz_c = (dc.array() * s.input.array() * (Scalar(1) - s.candidate.array().square())).matrix();
        const Vector dz_o = (d_out.array() * s.output.array() * (Scalar(1) - s.output.array())).matrix();

        concat << s.h_prev, s.x;
        g.params.forget.weights.noalias() += dz_f * concat.transpose();
        g.params.input.weights.noalias() += dz_i * concat.transpose();
        g.params.output.weights.noalias() += dz_o * concat.transpose();
        g.params.candidate.weights.noalias() += dz_c * concat.transpose();
        g.params.forget.bias += dz_f;
        g.params.input.bias += dz_i;
        g.params.output.bias += dz_o;
        g.params.candidate.bias += dz_c;

        Vector dconcat = params.forget.weights.transpose() * dz_f;
        dconcat.noalias() += params.input.weights.transpose() * dz_i;
        dconcat.noalias() += params.output.weights.transpose() * dz_o;
        dconcat.noalias() += params.candidate.weights.transpose() * dz_c;

        dh = dconcat.head(hidden);
        g.inputs.col(t) = dconcat.tail(input_dim);
        dc = dc.cwiseProduct(s.forget);
    }
    return g;
}

struct ExampleGradients {
    double loss = 0.0;
    LstmParams<double> params;
    std::map<TokenId, Eigen::VectorXd> embedding_rows;  // only rows the sequence touched
};

/// Exact BCE gradients for one example. Embedding rows are skipped when
/// `with_embeddings` is false; PAD never receives a gradient.
ExampleGradients backward(const SequenceCache<double>& cache, const TokenSequence& seq, Label y, const Model& model,
                          bool with_embeddings = true);

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update over flat buffers at (already incremented)
/// step count `t`. Throws NumericalError if a gradient entry is non-finite.
void adam_update(std::span<double> theta, std::span<const double> grad, AdamMoments& moments, long step,
                 const TrainConfig& config, const std::string& tensor_name = "tensor");

struct AdamState {
    std::map<std::string, AdamMoments> moments;
    long step = 0;
};

struct BatchGradients {
    LstmParams<double> params;
    RowMatrix embeddings;  // empty when embeddings are frozen
};

/// t <- t + 1, then Adam on every trainable tensor. Row PAD of the
/// embedding matrix is never updated.
void adam_step(Model& model, const BatchGradients& grads, AdamState& state, const TrainConfig& config);

struct Metrics {
    double loss = 0.0;
    double mae = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    bool precision_undefined = false;  // TP + FP == 0
    bool recall_undefined = false;     // TP + FN == 0
};

/// Metrics from predicted probabilities; label 1 iff p >= threshold.
Metrics compute_metrics(std::span<const double> probs, std::span<const Label> labels, double threshold = 0.5);

struct Example {
    TokenSequence seq;
    Label label;
};
using Dataset = std::vector<Example>;

/// Cleans, segments and encodes a labeled corpus with the model's tokenizer.
/// Reviews that are empty after cleaning are skipped and counted in `dropped`.
Dataset make_dataset(const Corpus& corpus, const Model& model, std::size_t* dropped = nullptr);

Metrics evaluate(const Model& model, const Dataset& data, std::optional<double> threshold = std::nullopt);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 0 when no epoch ran
    bool stopped_early = false;
};

struct TrainResult {
    Model model;  // parameters from best_epoch
    TrainHistory history;
};

TrainResult train(const Dataset& train_set, const Dataset& val_set, Model model, const TrainConfig& config);

}  // namespace senti
