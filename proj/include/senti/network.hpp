#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "senti/corpus.hpp"
#include "senti/embedding.hpp"
#include "senti/error.hpp"
#include "senti/tokenizer.hpp"

namespace senti {

inline constexpr double kSigmoidClamp = 30.0;

template <class Scalar>
    requires std::is_floating_point_v<Scalar>
Scalar sigmoid(Scalar z) {
    using std::exp;
    const Scalar lim(kSigmoidClamp);
    z = std::clamp(z, -lim, lim);
    return Scalar(1) / (Scalar(1) + exp(-z));
}

/// Componentwise logistic function with the argument clipped to [-30, 30].
template <class Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
    using Scalar = typename Derived::Scalar;
    const Scalar lim(kSigmoidClamp);
    return z.unaryExpr([lim](Scalar v) {
        using std::exp;
        v = std::clamp(v, -lim, lim);
        return Scalar(1) / (Scalar(1) + exp(-v));
    });
}

/// Weights act on the concatenation [h_prev, x] (hidden block first).
template <class Scalar>
struct Gate {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix weights;  // hidden x (hidden + input)
    Vector bias;     // hidden

    template <class Concat>
    Vector preactivation(const Eigen::MatrixBase<Concat>& concat) const {
        return weights * concat + bias;
    }
};

template <class Scalar>
struct LstmParams {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    Gate<Scalar> forget, input, output, candidate;
    RowVector readout_weights;  // 1 x hidden
    Scalar readout_bias{0};

    static LstmParams zeros(Eigen::Index hidden, Eigen::Index input_dim) {
        LstmParams p;
        for (Gate<Scalar>* g : {&p.forget, &p.input, &p.output, &p.candidate}) {
            g->weights = Matrix::Zero(hidden, hidden + input_dim);
            g->bias = Vector::Zero(hidden);
        }
        p.readout_weights = RowVector::Zero(hidden);
        p.readout_bias = Scalar(0);
        return p;
    }

    Eigen::Index hidden() const noexcept { return forget.bias.size(); }
    Eigen::Index input_dim() const noexcept { return forget.weights.cols() - forget.bias.size(); }

    /// Visits every tensor as (name, Map) in serialization order:
    /// the four gate weight matrices, the four gate biases, then the readout.
    template <class F>
    void for_each_tensor(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        visit_impl(*this, f);
    }

    template <class Other>
    LstmParams<Other> cast() const {
        LstmParams<Other> out;
        auto conv = [](const Gate<Scalar>& g) {
            return Gate<Other>{g.weights.template cast<Other>(), g.bias.template cast<Other>()};
        };
        out.forget = conv(forget);
        out.input = conv(input);
        out.output = conv(output);
        out.candidate = conv(candidate);
        out.readout_weights = readout_weights.template cast<Other>();
        out.readout_bias = static_cast<Other>(readout_bias);
        return out;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        using M = std::conditional_t<std::is_const_v<Self>, const Matrix, Matrix>;
        using MapT = Eigen::Map<M>;
        auto map = [](auto& t) { return MapT(t.data(), t.rows(), t.cols()); };
        f("W_f", map(self.forget.weights));
        f("W_i", map(self.input.weights));
        f("W_o", map(self.output.weights));
        f("W_c", map(self.candidate.weights));
        f("b_f", map(self.forget.bias));
        f("b_i", map(self.input.bias));
        f("b_o", map(self.output.bias));
        f("b_c", map(self.candidate.bias));
        f("W_out", map(self.readout_weights));
        f("b_out", MapT(&self.readout_bias, 1, 1));
    }
};

/// Everything one cell application computes, kept for backpropagation.
template <class Scalar>
struct StepRecord {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector x;          // input at this step
    Vector h_prev, c_prev;
    Vector forget;     // f_t
    Vector input;      // i_t
    Vector output;     // o_t
    Vector candidate;  // tanh candidate state
    Vector retained;   // f_t * c_prev
    Vector admitted;   // i_t * candidate
    Vector c;          // admitted + retained
    Vector tanh_c;
    Vector h;          // o_t * tanh(c)
};

template <class Scalar, class XVec, class HVec, class CVec>
StepRecord<Scalar> lstm_cell_forward(const Eigen::MatrixBase<XVec>& x, const Eigen::MatrixBase<HVec>& h_prev,
                                     const Eigen::MatrixBase<CVec>& c_prev, const LstmParams<Scalar>& p) {
    using Vector = typename StepRecord<Scalar>::Vector;
    if (h_prev.size() != p.hidden() || c_prev.size() != p.hidden() || x.size() != p.input_dim())
        throw DataError("lstm_cell_forward: shape mismatch");

    Vector concat(p.hidden() + p.input_dim());
    concat << h_prev, x;

    StepRecord<Scalar> s;
    s.x = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    s.forget = sigmoid(p.forget.preactivation(concat));
    s.input = sigmoid(p.input.preactivation(concat));
    s.candidate = p.candidate.preactivation(concat).array().tanh().matrix();
    s.retained = s.forget.cwiseProduct(s.c_prev);
    s.admitted = s.input.cwiseProduct(s.candidate);
    s.c = s.admitted + s.retained;
    s.output = sigmoid(p.output.preactivation(concat));
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.output.cwiseProduct(s.tanh_c);
    return s;
}

template <class Scalar>
struct SequenceCache {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<StepRecord<Scalar>> steps;
    Vector h_final;     // last hidden state
    Vector h_readout;   // h_final after the dropout mask
    std::optional<Vector> dropout_mask;
    Scalar logit{0};
    Scalar p{0};
};

/// Runs the cell over the columns of `inputs` (input_dim x T) from zero state,
/// then applies the optional mask and the sigmoid readout.
template <class Scalar>
SequenceCache<Scalar> forward_sequence(
    const LstmParams<Scalar>& params, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
    const std::optional<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& dropout_mask = std::nullopt) {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (inputs.cols() == 0) throw DataError("forward_sequence: empty sequence");
    if (dropout_mask && dropout_mask->size() != params.hidden())
        throw DataError("forward_sequence: dropout mask has wrong size");

    SequenceCache<Scalar> cache;
    cache.steps.reserve(static_cast<std::size_t>(inputs.cols()));
    Vector h = Vector::Zero(params.hidden());
    Vector c = Vector::Zero(params.hidden());
    for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
        cache.steps.push_back(lstm_cell_forward(inputs.col(t), h, c, params));
        h = cache.steps.back().h;
        c = cache.steps.back().c;
    }
    cache.h_final = h;
    cache.dropout_mask = dropout_mask;
    cache.h_readout = dropout_mask ? Vector(h.cwiseProduct(*dropout_mask)) : h;
    cache.logit = params.readout_weights.dot(cache.h_readout) + params.readout_bias;
    cache.p = sigmoid(cache.logit);
    return cache;
}

/// Glorot-uniform weights, zero biases except the forget bias at +1.
LstmParams<double> init_lstm_params(Eigen::Index hidden, Eigen::Index input_dim, std::uint64_t seed);

inline constexpr int kModelVersion = 1;

struct Model {
    Vocabulary vocab;
    EmbeddingMatrix embeddings;
    LstmParams<double> params;
    std::size_t max_len = 120;
    double threshold = 0.5;
    int version = kModelVersion;
    CleaningConfig cleaning;
    std::set<char32_t> stop_chars;

    /// Throws DataError when the embeddings, vocabulary and params disagree.
    void check_consistency() const;
};

Model make_model(Vocabulary vocab, EmbeddingMatrix embeddings, Eigen::Index hidden, std::uint64_t seed);

/// Stacks the embedding rows of the first true_length ids as columns.
Eigen::MatrixXd gather_inputs(const TokenSequence& seq, const Model& model);

SequenceCache<double> sequence_forward(const TokenSequence& seq, const Model& model,
                                       const std::optional<Eigen::VectorXd>& dropout_mask = std::nullopt);

/// clean -> segment -> encode with the model's tokenizer settings.
TokenSequence prepare_text(std::string_view text, const Model& model);

struct Prediction {
    Label label;
    double p;
};

/// label = 1 iff p >= threshold. Throws DataError on empty-after-cleaning text.
Prediction predict(std::string_view text, const Model& model, std::optional<double> threshold = std::nullopt);

}  // namespace senti
