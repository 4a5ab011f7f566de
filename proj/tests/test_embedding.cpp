#include <doctest.h>

#include <cmath>
#include <map>

#include "senti/embedding.hpp"
#include "senti/error.hpp"
#include "support/reference.hpp"
#include "support/temp_dir.hpp"

using namespace senti;
using senti::testing::rel_error;
using Ids = std::vector<TokenId>;

namespace {

constexpr TokenId A = 2, B = 3, C = 4;

EmbeddingMatrix zero_matrix(Eigen::Index rows, Eigen::Index dim) {
    return {RowMatrix::Zero(rows, dim), RowMatrix::Zero(rows, dim), 0};
}

EmbeddingMatrix random_matrix(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed, double scale = 0.5) {
    auto rng = substream(seed, "test-matrix");
    auto m = zero_matrix(rows, dim);
    for (Eigen::Index r = 1; r < rows; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) {
            m.vectors(r, c) = (2 * uniform01(rng) - 1) * scale;
            m.context_vectors(r, c) = (2 * uniform01(rng) - 1) * scale;
        }
    return m;
}

Vocabulary letters(int n) {
    std::vector<std::string> t;
    for (int i = 0; i < n; ++i) t.push_back(std::string(1, static_cast<char>('a' + i)));
    return Vocabulary(t, 1);
}

}  // namespace

TEST_CASE("extract_windows examples") {
    CHECK(extract_windows(Ids{A, B, C}, 1) ==
          std::vector<ContextWindow>{{A, {B}}, {B, {A, C}}, {C, {B}}});
    CHECK(extract_windows(Ids{A}, 1).empty());
    CHECK(extract_windows(Ids{A, B, kPadId}, 2) == std::vector<ContextWindow>{{A, {B}}, {B, {A}}});
    CHECK(extract_windows(Ids{A, kPadId, B}, 1).empty());
    CHECK(extract_windows(Ids{A, B, C, A}, 2)[0].context == Ids{B, C});
}

TEST_CASE("zero matrices give (k+1) ln 2") {
    for (int k : {1, 3, 5}) {
        auto m = zero_matrix(6, 8);
        Ids negs(static_cast<std::size_t>(k), C);
        CHECK(std::abs(cbow_step(Ids{A, B}, C + 1, negs, m, 0.1) - (k + 1) * std::log(2.0)) < 1e-12);
        CHECK(std::abs(skipgram_step(A, B, negs, m, 0.1) - (k + 1) * std::log(2.0)) < 1e-12);
    }
}

TEST_CASE("all-zero matrices are a stationary point of the objective") {
    auto m = zero_matrix(6, 8);
    const auto g = cbow_gradient(m, Ids{A, B}, C, Ids{5});
    for (const auto& [id, row] : g.input_rows) CHECK(row.isZero(0.0));
    for (const auto& [id, row] : g.context_rows) CHECK(row.isZero(0.0));
}

TEST_CASE("one step decreases the example's own loss") {
    Vocabulary vocab = letters(6);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        // Standard starting point: small random inputs, zero context vectors.
        auto m = init_embeddings(vocab, 8, seed);
        const Ids ctx{2, 3, 4}, negs{5, 6, 7};
        const double before = cbow_loss(m, ctx, 6, negs);
        CHECK(cbow_step(ctx, 6, negs, m, 0.025) == doctest::Approx(before).epsilon(1e-15));
        CHECK(cbow_loss(m, ctx, 6, negs) < before);

        auto s = init_embeddings(vocab, 8, seed + 100);
        const double sg_before = skipgram_loss(s, 2, 3, negs);
        skipgram_step(2, 3, negs, s, 0.025);
        CHECK(skipgram_loss(s, 2, 3, negs) < sg_before);
    }
}

TEST_CASE("small SGD steps do not increase the loss at random points") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto m = random_matrix(9, 8, seed);
        const Ids ctx{2, 3, 3}, negs{5, 6, 8, 6};
        const double before = cbow_loss(m, ctx, 4, negs);
        cbow_step(ctx, 4, negs, m, 1e-3);
        CHECK(cbow_loss(m, ctx, 4, negs) <= before);
        const double sg = skipgram_loss(m, 7, 2, negs);
        skipgram_step(7, 2, negs, m, 1e-3);
        CHECK(skipgram_loss(m, 7, 2, negs) <= sg);
    }
}

TEST_CASE("library losses agree with the scalar reference") {
    using senti::testing::ref_cbow_loss;
    using senti::testing::ref_skipgram_loss;
    using senti::testing::to_ref_rows;
    const auto m = random_matrix(9, 8, 42);
    const auto in = to_ref_rows<double>(m.vectors);
    const auto out = to_ref_rows<double>(m.context_vectors);
    const Ids ctx{2, 5, 7}, negs{3, 4, 3};
    CHECK(cbow_loss(m, ctx, 6, negs) == doctest::Approx(ref_cbow_loss(in, out, ctx, 6, negs)).epsilon(1e-13));
    CHECK(skipgram_loss(m, 6, 2, negs) == doctest::Approx(ref_skipgram_loss(in, out, 6, 2, negs)).epsilon(1e-13));
}

TEST_CASE("negative sampler follows unigram^(3/4)") {
    const std::vector<double> counts{0, 5, 100, 40, 10, 1, 0, 300};
    const NegativeSampler sampler(counts);
    double z = 0;
    for (std::size_t i = 1; i < counts.size(); ++i) z += std::pow(counts[i], 0.75);
    auto rng = substream(99, "sampler-test");
    const int n = 100000;
    std::vector<int> hist(counts.size(), 0);
    for (int k = 0; k < n; ++k) ++hist[static_cast<std::size_t>(sampler.draw(rng))];
    CHECK(hist[0] == 0);
    CHECK(hist[6] == 0);
    for (std::size_t i = 1; i < counts.size(); ++i) {
        const double p = std::pow(counts[i], 0.75) / z;
        CHECK(sampler.probability(static_cast<TokenId>(i)) == doctest::Approx(p).epsilon(1e-12));
        const double sd = std::sqrt(n * p * (1 - p));
        CHECK(std::abs(hist[i] - n * p) <= 3 * sd + 1e-9);
    }
    for (int k = 0; k < 1000; ++k) CHECK(sampler.draw_excluding(rng, 7) != 7);
}

TEST_CASE("train_embeddings contracts") {
    const Corpus c{"t", {{"我们喜欢天气好", 1, {}}, {"天气不好我们不喜欢", 0, {}}, {"好好好", 1, {}}}};
    const auto vocab = build_vocab(c, 1);
    const auto sentences = encode_corpus(c, vocab);
    W2vConfig cfg;
    cfg.dim = 8;
    cfg.seed = 5;

    SUBCASE("epochs=0 returns the seeded initialization") {
        cfg.epochs = 0;
        const auto m = train_embeddings(sentences, vocab, cfg);
        CHECK(m.vectors == init_embeddings(vocab, 8, 5).vectors);
        const double half = 0.5 / 8;
        CHECK(m.vectors.cwiseAbs().maxCoeff() <= half);
        CHECK(m.context_vectors.isZero(0.0));
    }
    SUBCASE("determinism, PAD row and mode difference") {
        const auto a = train_embeddings(sentences, vocab, cfg);
        const auto b = train_embeddings(sentences, vocab, cfg);
        CHECK(a.vectors == b.vectors);
        CHECK(a.vectors.row(kPadId).isZero(0.0));
        CHECK(a.context_vectors.row(kPadId).isZero(0.0));
        CHECK(a.vocab_hash == vocab.hash());
        cfg.mode = W2vMode::SkipGram;
        const auto s = train_embeddings(sentences, vocab, cfg);
        CHECK(s.vectors != a.vectors);
        CHECK(s.vectors.row(kPadId).isZero(0.0));
    }
    SUBCASE("subsampling keeps the PAD row at zero") {
        cfg.subsample_threshold = 1e-2;
        const auto m = train_embeddings(sentences, vocab, cfg);
        CHECK(m.vectors.row(kPadId).isZero(0.0));
        CHECK(m.vectors.allFinite());
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(train_embeddings({}, vocab, cfg), DataError);
        cfg.window = 0;
        CHECK_THROWS_AS(train_embeddings(sentences, vocab, cfg), ConfigError);
    }
}

TEST_CASE("nearest_neighbors") {
    const auto vocab = letters(5);  // ids 2..6 = a..e
    auto m = init_embeddings(vocab, 6, 3);
    m.vectors.row(vocab.id("d")) = m.vectors.row(vocab.id("b"));

    auto nn = nearest_neighbors("b", 2, m, vocab);
    REQUIRE(nn.size() == 2);
    CHECK(nn[0].token == "d");
    CHECK(nn[0].cosine == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& x : nearest_neighbors("b", 100, m, vocab)) {
        CHECK(x.token != "b");
        CHECK(x.id >= 2);
    }
    CHECK(nearest_neighbors("b", 100, m, vocab).size() == 4);

    std::vector<std::string> before;
    for (const auto& x : nearest_neighbors("a", 4, m, vocab)) before.push_back(x.token);
    auto scaled = m;
    scaled.vectors *= 37.5;
    std::vector<std::string> after;
    for (const auto& x : nearest_neighbors("a", 4, scaled, vocab)) after.push_back(x.token);
    CHECK(before == after);

    CHECK_THROWS_AS(nearest_neighbors("z", 2, m, vocab), DataError);
    m.vectors.row(vocab.id("c")).setZero();
    CHECK_THROWS_AS(nearest_neighbors("c", 2, m, vocab), DataError);
}

TEST_CASE("nearest_neighbors breaks ties by id") {
    const auto vocab = letters(4);
    auto m = init_embeddings(vocab, 3, 1);
    m.vectors.row(3) = m.vectors.row(2);
    m.vectors.row(4) = m.vectors.row(2);
    m.vectors.row(5) = m.vectors.row(2);
    const auto nn = nearest_neighbors("d", 3, m, vocab);
    CHECK(nn[0].id == 2);
    CHECK(nn[1].id == 3);
    CHECK(nn[2].id == 4);
}

TEST_CASE("embedding file round trip") {
    senti::testing::TempDir dir;
    const Corpus c{"t", {{"天气很好", 1, {}}, {"天气不好", 0, {}}}};
    const auto vocab = build_vocab(c, 1);
    W2vConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 1;
    const auto m = train_embeddings(encode_corpus(c, vocab), vocab, cfg);
    const Eigen::MatrixXf expected = m.vectors.cast<float>();

    for (auto fmt : {EmbeddingFormat::Binary, EmbeddingFormat::Json}) {
        const auto path = dir / (fmt == EmbeddingFormat::Binary ? "e.w2v" : "e.json");
        save_embeddings(path, m, vocab, fmt);
        const auto loaded = load_embeddings(path, vocab);
        CHECK(loaded.vectors.cast<float>() == expected);
        CHECK(loaded.vocab_hash == vocab.hash());
        // Reloaded matrices are exactly representable, so a second save is byte-identical.
        const auto again = dir / "again";
        save_embeddings(again, loaded, vocab, fmt);
        CHECK(senti::testing::slurp(again) == senti::testing::slurp(path));
    }
    const auto header = senti::testing::slurp(dir / "e.w2v").substr(0, 5);
    CHECK(header == "W2V1 ");

    CHECK_THROWS_AS(load_embeddings(dir.write("bad.w2v", "XXXX 1 2 3\n"), vocab), DataError);
    const Vocabulary other({"x"}, 1);
    CHECK_THROWS_AS(load_embeddings(dir / "e.w2v", other), DataError);
}

TEST_CASE("embedding gradients match finite differences") {
    using LD = long double;
    using senti::testing::ref_cbow_loss;
    using senti::testing::ref_skipgram_loss;
    using senti::testing::to_ref_rows;
    const long double step = 1e-5L;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = random_matrix(8, 8, seed + 7);
        const Ids ctx{2, 4, 4, 6}, negs{3, 5, 3};
        const TokenId center = 7;

        auto check = [&](const W2vGradient& g, auto loss_fn) {
            auto in = to_ref_rows<LD>(m.vectors);
            auto out = to_ref_rows<LD>(m.context_vectors);
            std::map<std::pair<int, TokenId>, Eigen::VectorXd> analytic;
            for (const auto& [id, row] : g.input_rows) analytic[{0, id}] = row;
            for (const auto& [id, row] : g.context_rows) analytic[{1, id}] = row;
            double worst = 0;
            for (int side = 0; side < 2; ++side)
                for (TokenId id = 1; id < 8; ++id)
                    for (int k = 0; k < 8; ++k) {
                        auto& table = side == 0 ? in : out;
                        const LD saved = table[id][k];
                        table[id][k] = saved + step;
                        const LD up = loss_fn(in, out);
                        table[id][k] = saved - step;
                        const LD down = loss_fn(in, out);
                        table[id][k] = saved;
                        const double numeric = static_cast<double>((up - down) / (2 * step));
                        const auto it = analytic.find({side, id});
                        const double a = it == analytic.end() ? 0.0 : it->second(k);
                        if (numeric == 0.0 && a == 0.0) continue;
                        worst = std::max(worst, rel_error(a, numeric));
                    }
            CHECK(worst <= 1e-5);
        };
        check(cbow_gradient(m, ctx, center, negs),
              [&](const auto& in, const auto& out) { return ref_cbow_loss<LD>(in, out, ctx, center, negs); });
        check(skipgram_gradient(m, 2, 5, negs),
              [&](const auto& in, const auto& out) { return ref_skipgram_loss<LD>(in, out, 2, 5, negs); });
    }
}
