#pragma once

// Central-difference check of the BPTT gradients against the scalar
// reference forward pass, evaluated in long double.

#include <cmath>
#include <set>
#include <string>

#include "senti/training.hpp"
#include "support/reference.hpp"

namespace senti::testing {

struct GradCheckResult {
    double worst_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t entries_checked = 0;
    bool absent_rows_zero = true;
};

inline Model random_model(Eigen::Index hidden, int dim, int vocab_size, std::uint64_t seed, double scale = 0.8) {
    std::vector<std::string> toks;
    for (int i = 0; i < vocab_size; ++i) toks.push_back("t" + std::to_string(i));
    const Vocabulary vocab(toks, 1);
    auto rng = substream(seed, "gradcheck-model");
    auto emb = init_embeddings(vocab, dim, seed);
    for (Eigen::Index r = 1; r < emb.rows(); ++r)
        for (Eigen::Index c = 0; c < dim; ++c) emb.vectors(r, c) = 2 * uniform01(rng) - 1;
    Model m = make_model(vocab, std::move(emb), hidden, seed);
    m.params.for_each_tensor([&](std::string_view, auto t) {
        for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = (2 * uniform01(rng) - 1) * scale;
    });
    return m;
}

inline GradCheckResult lstm_gradcheck(std::uint64_t seed, Eigen::Index hidden = 6, int dim = 5, std::size_t steps = 7,
                                      double fd_step = 1e-5) {
    using LD = long double;
    const int vocab_size = 10;
    Model model = random_model(hidden, dim, vocab_size, seed);
    auto rng = substream(seed, "gradcheck-seq");

    TokenSequence seq;
    seq.ids.assign(steps + 2, kPadId);
    seq.true_length = steps;
    // Leave several ids unused so their rows must get exactly zero gradient.
    for (std::size_t t = 0; t < steps; ++t) seq.ids[t] = static_cast<TokenId>(1 + uniform_index(rng, 6));
    const Label y = uniform01(rng) < 0.5 ? 1 : 0;
    Eigen::VectorXd mask(hidden);
    for (Eigen::Index k = 0; k < hidden; ++k) mask(k) = uniform01(rng) < 0.5 ? 0.0 : 2.0;

    const auto cache = sequence_forward(seq, model, mask);
    const auto grads = backward(cache, seq, y, model);

    const std::vector<TokenId> ids(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(steps));
    std::vector<LD> ref_mask(mask.data(), mask.data() + mask.size());
    auto loss_of = [&](const Model& m) {
        const auto table = to_ref_rows<LD>(m.embeddings.vectors);
        return ref_bce<LD>(ref_forward(to_ref<LD>(m.params), lookup(table, ids), &ref_mask), y);
    };

    GradCheckResult res;
    auto consider = [&](const std::string& name, double analytic, double numeric) {
        ++res.entries_checked;
        const double e = rel_error(analytic, numeric);
        if (e > res.worst_rel_error) {
            res.worst_rel_error = e;
            res.worst_tensor = name;
        }
    };
    auto central = [&](double& slot, Model& probe) {
        const double saved = slot;
        const double up_v = saved + fd_step, down_v = saved - fd_step;
        slot = up_v;
        const LD up = loss_of(probe);
        slot = down_v;
        const LD down = loss_of(probe);
        slot = saved;
        return static_cast<double>((up - down) / (static_cast<LD>(up_v) - static_cast<LD>(down_v)));
    };

    Model probe = model;
    std::vector<std::pair<std::string, std::vector<double>>> analytic;
    grads.params.for_each_tensor([&](std::string_view name, const auto& t) {
        analytic.emplace_back(std::string(name), std::vector<double>(t.data(), t.data() + t.size()));
    });
    std::size_t tensor = 0;
    probe.params.for_each_tensor([&](std::string_view name, auto t) {
        const auto& a = analytic[tensor++].second;
        for (Eigen::Index k = 0; k < t.size(); ++k) consider(std::string(name), a[k], central(t.data()[k], probe));
    });

    const std::set<TokenId> touched(ids.begin(), ids.end());
    for (TokenId id = 1; id < static_cast<TokenId>(model.embeddings.rows()); ++id) {
        const auto it = grads.embedding_rows.find(id);
        if (!touched.contains(id)) {
            if (it != grads.embedding_rows.end() && !it->second.isZero(0.0)) res.absent_rows_zero = false;
            continue;
        }
        for (int k = 0; k < dim; ++k) {
            const double a = it == grads.embedding_rows.end() ? 0.0 : it->second(k);
            consider("embeddings", a, central(probe.embeddings.vectors(id, k), probe));
        }
    }
    if (grads.embedding_rows.contains(kPadId)) res.absent_rows_zero = false;
    return res;
}

}  // namespace senti::testing
