#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "senti/cli.hpp"
#include "senti/embedding.hpp"
#include "senti/utf8.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace senti;
using nlohmann::json;
using senti::testing::slurp;
using senti::testing::TempDir;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args, const std::string& stdin_text = "") {
    std::istringstream in(stdin_text);
    std::ostringstream out, err;
    const int code = cli::run(args, in, out, err);
    return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
    std::vector<json> out;
    std::istringstream s(text);
    std::string line;
    while (std::getline(s, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

const std::string kLexicon = "{\"token\":\"好\",\"weight\":1}\n{\"token\":\"坏\",\"weight\":-1}\n";

// Trains one small model through the CLI and keeps it for the tests below.
struct CliFixture {
    TempDir dir;
    std::filesystem::path corpus, model, history;
    Run train_run;

    CliFixture() {
        auto c = senti::testing::sentiment_corpus(800, 21, 10, 30);
        corpus = dir / "synthetic.jsonl";
        save_corpus(corpus, c);
        model = dir / "model.ssm";
        history = dir / "history.json";
        const auto config = dir.write("config.json", R"({"w2v": {"dim": 8, "epochs": 3},
                                                        "network": {"hidden": 16},
                                                        "tokenizer": {"max_len": 40},
                                                        "split": {"train_frac": 0.75, "val_frac": 0.25}})");
        const auto base = std::vector<std::string>{"--config", config.string(), "--seed", "5"};
        auto embed_args = base;
        embed_args.insert(embed_args.end(), {"embed", "--corpus", corpus.string(), "--vocab", (dir / "vocab.json").string(),
                                             "--embeddings", (dir / "emb.w2v").string()});
        const auto e = run(embed_args);
        REQUIRE(e.code == 0);
        auto train_args = base;
        train_args.insert(train_args.end(), {"train", "--corpus", corpus.string(), "--vocab", (dir / "vocab.json").string(),
                                             "--embeddings", (dir / "emb.w2v").string(), "--model", model.string(),
                                             "--history", history.string()});
        train_run = run(train_args);
    }
};

CliFixture& fixture() {
    static CliFixture f;
    return f;
}

}  // namespace

TEST_CASE("cli prelabel") {
    TempDir dir;
    const auto lex = dir.write("lex.jsonl", kLexicon);
    const auto corpus = dir.write("c.jsonl", "{\"text\":\"好\"}\n{\"text\":\"坏\"}\n");
    const auto out = dir / "labeled.jsonl";
    auto r = run({"prelabel", "--input", corpus.string(), "--lexicon", lex.string(), "--output", out.string()});
    REQUIRE(r.code == 0);
    const auto summary = json::parse(r.out);
    CHECK(summary["positive"] == 1);
    CHECK(summary["negative"] == 1);
    const auto labeled = load_corpus(out);
    CHECK(labeled.reviews[0].label == 1);
    CHECK(labeled.reviews[1].label == 0);
    CHECK(r.err.find("1 positive reviews and 1 negative reviews") != std::string::npos);

    const auto empty = dir.write("empty.jsonl", "");
    r = run({"prelabel", "--input", empty.string(), "--lexicon", lex.string(), "--output", (dir / "o2.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(json::parse(r.out) == json{{"positive", 0}, {"negative", 0}});

    r = run({"prelabel", "--input", corpus.string(), "--lexicon", (dir / "no-such-lexicon.jsonl").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("no-such-lexicon.jsonl") != std::string::npos);

    r = run({"prelabel", "--input", corpus.string(), "--lexicon", lex.string()});
    CHECK(r.code == 0);
    CHECK(json_lines(r.out).size() == 2);
}

TEST_CASE("cli embed") {
    TempDir dir;
    const auto corpus = dir.write("toy.jsonl", "{\"text\":\"今天天气很好\"}\n{\"text\":\"天气不好\"}\n{\"text\":\"很好很好\"}\n");
    auto embed = [&](const std::string& tag, std::vector<std::string> extra) {
        std::vector<std::string> args{"--set", "w2v.dim=8", "embed", "--corpus", corpus.string(), "--vocab",
                                      (dir / (tag + ".vocab.json")).string(), "--embeddings",
                                      (dir / (tag + ".w2v")).string()};
        args.insert(args.begin(), extra.begin(), extra.end());
        return run(args);
    };

    auto r = embed("a", {"--set", "w2v.epochs=1"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["dim"] == 8);
    const auto vocab = load_vocab(dir / "a.vocab.json");
    const auto m1 = load_embeddings(dir / "a.w2v", vocab);
    save_embeddings(dir / "again.w2v", m1, vocab);
    CHECK(slurp(dir / "again.w2v") == slurp(dir / "a.w2v"));

    r = embed("zero", {"--set", "w2v.epochs=0", "--seed", "9"});
    REQUIRE(r.code == 0);
    const auto m0 = load_embeddings(dir / "zero.w2v", vocab);
    CHECK(m0.vectors == init_embeddings(vocab, 8, 9).vectors.cast<float>().cast<double>());

    REQUIRE(embed("cbow", {"--set", "w2v.mode=cbow"}).code == 0);
    REQUIRE(embed("sg", {"--set", "w2v.mode=skipgram"}).code == 0);
    CHECK(slurp(dir / "cbow.w2v") != slurp(dir / "sg.w2v"));

    REQUIRE(embed("js", {"--set", "w2v.format=json", "--set", "w2v.epochs=1"}).code == 0);
    CHECK(load_embeddings(dir / "js.w2v", vocab).vectors == m1.vectors);

    const auto empty = dir.write("empty.jsonl", "");
    r = run({"embed", "--corpus", empty.string(), "--vocab", (dir / "v").string(), "--embeddings", (dir / "e").string()});
    CHECK(r.code == 3);
}

TEST_CASE("cli train, evaluate and predict on the synthetic fixture") {
    auto& f = fixture();
    REQUIRE(f.train_run.code == 0);
    const auto report = json::parse(f.train_run.out);
    CHECK(report["val_metrics"]["accuracy"].get<double>() >= 0.95);
    CHECK(std::filesystem::exists(f.model));
    const auto hist = json::parse(slurp(f.history));
    REQUIRE(hist.is_array());
    CHECK(hist.size() == report["epochs_run"].get<std::size_t>());

    auto r = run({"evaluate", "--model", f.model.string(), "--test", f.corpus.string()});
    REQUIRE(r.code == 0);
    const auto metrics = json::parse(r.out);
    CHECK(metrics["accuracy"].get<double>() >= 0.95);
    for (const char* key : {"loss", "mae", "accuracy", "precision", "recall", "tp", "fp", "fn", "tn"})
        CHECK(metrics.contains(key));

    TempDir dir;
    const auto one = dir.write("one.jsonl", "{\"text\":\"好好好棒棒赞优美好好\",\"label\":1}\n");
    r = run({"evaluate", "--model", f.model.string(), "--test", one.string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["accuracy"] == 1.0);
    CHECK(json::parse(r.out)["recall"] == 1.0);

    const auto unlabeled = dir.write("u.jsonl", "{\"text\":\"好\"}\n");
    r = run({"evaluate", "--model", f.model.string(), "--test", unlabeled.string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("labels required") != std::string::npos);

    r = run({"predict", "--model", f.model.string()}, "好好好棒棒赞优美好好\n\n坏坏差烂恶悲坏坏\n坏坏差烂恶悲坏坏\n");
    REQUIRE(r.code == 0);
    const auto lines = json_lines(r.out);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0]["label"] == 1);
    CHECK(lines[1] == json{{"error", "empty input"}});
    CHECK(lines[2]["label"] == 0);
    CHECK(lines[2] == lines[3]);

    r = run({"predict", "--model", f.model.string(), "--text", "好赞棒", "--text", "坏烂差"});
    REQUIRE(r.code == 0);
    CHECK(json_lines(r.out).size() == 2);
}

TEST_CASE("cli train rerun gives a byte-identical history") {
    auto& f = fixture();
    REQUIRE(f.train_run.code == 0);
    const auto again = f.dir / "history2.json";
    const auto r = run({"--config", (f.dir / "config.json").string(), "--seed", "5", "train", "--corpus", f.corpus.string(),
                        "--vocab", (f.dir / "vocab.json").string(), "--embeddings", (f.dir / "emb.w2v").string(),
                        "--model", (f.dir / "model2.ssm").string(), "--history", again.string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(again) == slurp(f.history));
    CHECK(slurp(f.dir / "model2.ssm") == slurp(f.model));
}

TEST_CASE("cli error contracts") {
    auto& f = fixture();
    TempDir dir;
    const auto bad = dir.write("bad.w2v", "GARBAGE\n");
    auto r = run({"train", "--corpus", f.corpus.string(), "--vocab", (f.dir / "vocab.json").string(), "--embeddings",
                  bad.string(), "--model", (dir / "m").string(), "--history", (dir / "h").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("bad magic") != std::string::npos);

    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"--set", "nope.key=1", "predict", "--model", f.model.string()}).code == 2);
    CHECK(run({"--set", "train.beta1=2", "predict", "--model", f.model.string()}).code == 2);
    CHECK(run({"predict", "--model", bad.string()}, "x\n").code == 3);

    r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("\"dim\": 300") != std::string::npos);
}

TEST_CASE("config overrides") {
    json j = json::object();
    cli::apply_override(j, "w2v.dim=16");
    cli::apply_override(j, "w2v.mode=skipgram");
    cli::apply_override(j, "train.freeze_embeddings=true");
    const auto c = cli::config_from_json(j);
    CHECK(c.w2v.dim == 16);
    CHECK(c.w2v.mode == W2vMode::SkipGram);
    CHECK(c.train.freeze_embeddings);
    CHECK(c.w2v.window == 4);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK_THROWS_AS(cli::apply_override(j, "novalue"), ConfigError);
    CHECK_THROWS_AS(cli::config_from_json(json{{"w2v", {{"dim", "big"}}}}), ConfigError);
}
