#include "senti/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "senti/rng.hpp"

namespace senti {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("train.dropout_rate must lie in [0, 1)");
    if (patience < 1) throw ConfigError("train.patience must be >= 1");
}

double bce_loss(double p, Label y) {
    p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return y == 1 ? -std::log(p) : -std::log1p(-p);
}

ExampleGradients backward(const SequenceCache<double>& cache, const TokenSequence& seq, Label y, const Model& model,
                          bool with_embeddings) {
    if (cache.steps.size() != seq.true_length) throw DataError("backward: cache does not match the sequence");
    if (cache.h_final.size() != model.params.hidden()) throw DataError("backward: cache does not match the model");

    auto seq_grads = backward_sequence(cache, model.params, cache.p - static_cast<double>(y));
    ExampleGradients g;
    g.loss = bce_loss(cache.p, y);
    g.params = std::move(seq_grads.params);
    if (with_embeddings) {
        for (std::size_t t = 0; t < seq.true_length; ++t) {
            const TokenId id = seq.ids[t];
            if (id == kPadId) continue;
            auto [it, fresh] = g.embedding_rows.try_emplace(id, Eigen::VectorXd::Zero(model.embeddings.dim()));
            it->second += seq_grads.inputs.col(static_cast<Eigen::Index>(t));
        }
    }
    return g;
}

void adam_update(std::span<double> theta, std::span<const double> grad, AdamMoments& moments, long step,
                 const TrainConfig& config, const std::string& tensor_name) {
    if (grad.size() != theta.size()) throw DataError("adam_update: gradient shape mismatch for " + tensor_name);
    if (step < 1) throw DataError("adam_update: step count must be >= 1");
    for (std::size_t k = 0; k < grad.size(); ++k)
        if (!std::isfinite(grad[k]))
            throw NumericalError("non-finite gradient in " + tensor_name + " at flat index " + std::to_string(k));
    if (moments.m.size() != theta.size()) {
        moments.m.assign(theta.size(), 0.0);
        moments.v.assign(theta.size(), 0.0);
    }
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double g = grad[k];
        double& m = moments.m[k];
        double& v = moments.v[k];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        theta[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

void adam_step(Model& model, const BatchGradients& grads, AdamState& state, const TrainConfig& config) {
    ++state.step;
    // Collect gradient buffers first so parameters and gradients are visited in the same order.
    std::vector<std::pair<std::string, std::span<const double>>> gbufs;
    grads.params.for_each_tensor([&](std::string_view name, const auto& t) {
        gbufs.emplace_back(std::string(name), std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
    });
    std::size_t k = 0;
    model.params.for_each_tensor([&](std::string_view name, auto t) {
        const auto& [gname, gbuf] = gbufs.at(k++);
        if (gname != name) throw DataError("adam_step: tensor order mismatch");
        adam_update(std::span<double>(t.data(), static_cast<std::size_t>(t.size())), gbuf, state.moments[gname],
                    state.step, config, gname);
    });
    if (!config.freeze_embeddings && grads.embeddings.size() > 0) {
        auto& e = model.embeddings.vectors;
        if (grads.embeddings.rows() != e.rows() || grads.embeddings.cols() != e.cols())
            throw DataError("adam_step: embedding gradient shape mismatch");
        // Row-major storage: rows 1.. are one contiguous block after PAD.
        const auto offset = static_cast<std::size_t>(e.cols());
        const auto n = static_cast<std::size_t>(e.size()) - offset;
        adam_update(std::span<double>(e.data() + offset, n), std::span<const double>(grads.embeddings.data() + offset, n),
                    state.moments["embeddings"], state.step, config, "embeddings");
    }
}

Metrics compute_metrics(std::span<const double> probs, std::span<const Label> labels, double threshold) {
    if (probs.size() != labels.size()) throw DataError("compute_metrics: size mismatch");
    if (probs.empty()) throw DataError("cannot evaluate an empty dataset");
    Metrics m;
    double loss = 0.0, mae = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const double p = probs[k];
        const Label y = labels[k];
        loss += bce_loss(p, y);
        mae += std::abs(p - static_cast<double>(y));
        const bool pred = p >= threshold;
        if (pred && y == 1) ++m.tp;
        else if (pred && y == 0) ++m.fp;
        else if (!pred && y == 1) ++m.fn;
        else ++m.tn;
    }
    const auto n = static_cast<double>(probs.size());
    m.loss = loss / n;
    m.mae = mae / n;
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision_undefined = m.tp + m.fp == 0;
    m.recall_undefined = m.tp + m.fn == 0;
    m.precision = m.precision_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.recall_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    return m;
}

Dataset make_dataset(const Corpus& corpus, const Model& model, std::size_t* dropped) {
    Dataset data;
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < corpus.size(); ++k) {
        const auto& r = corpus.reviews[k];
        if (!r.label) throw DataError("labels required: review " + std::to_string(k + 1) + " has no label");
        auto seq = prepare_text(r.text, model);
        if (seq.true_length == 0) {
            ++skipped;
            continue;
        }
        data.push_back({std::move(seq), *r.label});
    }
    if (dropped) *dropped = skipped;
    return data;
}

Metrics evaluate(const Model& model, const Dataset& data, std::optional<double> threshold) {
    if (data.empty()) throw DataError("cannot evaluate an empty dataset");
    std::vector<double> probs;
    std::vector<Label> labels;
    probs.reserve(data.size());
    labels.reserve(data.size());
    for (const auto& ex : data) {
        probs.push_back(sequence_forward(ex.seq, model).p);
        labels.push_back(ex.label);
    }
    return compute_metrics(probs, labels, threshold.value_or(model.threshold));
}

namespace {

void add_scaled(LstmParams<double>& acc, const LstmParams<double>& g, double scale) {
    std::vector<std::span<const double>> src;
    g.for_each_tensor([&](std::string_view, const auto& t) {
        src.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
    });
    std::size_t k = 0;
    acc.for_each_tensor([&](std::string_view, auto t) {
        const auto s = src[k++];
        for (std::size_t i = 0; i < s.size(); ++i) t.data()[i] += scale * s[i];
    });
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, Model model, const TrainConfig& config) {
    config.validate();
    model.check_consistency();
    TrainResult result{model, {}};
    if (config.epochs == 0) return result;
    if (train_set.empty() || val_set.empty()) throw DataError("training and validation sets must be non-empty");

    auto shuffle_rng = substream(config.seed, "shuffle");
    auto dropout_rng = substream(config.seed, "dropout");
    const Eigen::Index hidden = model.params.hidden();
    const Eigen::Index dim = model.embeddings.dim();
    const bool tune_embeddings = !config.freeze_embeddings;
    const double keep = 1.0 - config.dropout_rate;

    AdamState adam;
    BatchGradients batch;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

        const auto bs = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0, batch_idx = 0; start < order.size(); start += bs, ++batch_idx) {
            const std::size_t end = std::min(order.size(), start + bs);
            const double scale = 1.0 / static_cast<double>(end - start);
            batch.params = LstmParams<double>::zeros(hidden, dim);
            if (tune_embeddings) batch.embeddings.setZero(model.embeddings.rows(), dim);
            else batch.embeddings.resize(0, 0);

            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = train_set[order[k]];
                std::optional<Eigen::VectorXd> mask;
                if (config.dropout_rate > 0.0) {
                    mask = Eigen::VectorXd(hidden);
                    for (Eigen::Index j = 0; j < hidden; ++j) (*mask)(j) = uniform01(dropout_rng) < keep ? 1.0 / keep : 0.0;
                }
                const auto cache = sequence_forward(ex.seq, model, mask);
                const auto g = backward(cache, ex.seq, ex.label, model, tune_embeddings);
                batch_loss += g.loss * scale;
                add_scaled(batch.params, g.params, scale);
                for (const auto& [id, row] : g.embedding_rows) batch.embeddings.row(id) += scale * row.transpose();
            }
            if (!std::isfinite(batch_loss))
                throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batch_idx + 1));
            adam_step(model, batch, adam, config);
        }

        const auto tr = evaluate(model, train_set);
        const auto va = evaluate(model, val_set);
        if (!std::isfinite(tr.loss) || !std::isfinite(va.loss))
            throw NumericalError("training diverged: non-finite evaluation loss after epoch " + std::to_string(epoch));
        result.history.epochs.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});

        if (va.loss < best_val) {
            best_val = va.loss;
            result.history.best_epoch = epoch;
            result.model = model;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            result.history.stopped_early = epoch < config.epochs;
            break;
        }
    }
    return result;
}

}  // namespace senti
