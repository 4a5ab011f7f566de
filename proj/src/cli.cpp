#include "senti/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "senti/model_io.hpp"
#include "senti/network.hpp"

namespace senti::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json default_config_json() {
    const PipelineConfig d;
    return {
        {"seed", d.seed},
        {"threshold", d.threshold},
        {"paths",
         {{"corpus", d.paths.corpus},
          {"train", d.paths.train},
          {"val", d.paths.val},
          {"test", d.paths.test},
          {"lexicon", d.paths.lexicon},
          {"output", d.paths.output},
          {"vocab", d.paths.vocab},
          {"embeddings", d.paths.embeddings},
          {"model", d.paths.model},
          {"history", d.paths.history}}},
        {"cleaning",
         {{"strip_urls", d.cleaning.strip_urls},
          {"strip_mentions", d.cleaning.strip_mentions},
          {"strip_hashtags", d.cleaning.strip_hashtags}}},
        {"tokenizer", {{"max_len", d.tokenizer.max_len}, {"min_count", d.tokenizer.min_count}, {"stop_chars", ""}}},
        {"split", {{"train_frac", d.train_frac}, {"val_frac", d.val_frac}}},
        {"w2v",
         {{"mode", "cbow"},
          {"window", d.w2v.window},
          {"negatives", d.w2v.negatives},
          {"learning_rate", d.w2v.learning_rate},
          {"min_learning_rate", d.w2v.min_learning_rate},
          {"epochs", d.w2v.epochs},
          {"dim", d.w2v.dim},
          {"subsample_threshold", nullptr},
          {"format", "binary"}}},
        {"network", {{"hidden", d.hidden}}},
        {"train",
         {{"learning_rate", d.train.learning_rate},
          {"beta1", d.train.beta1},
          {"beta2", d.train.beta2},
          {"epsilon", d.train.epsilon},
          {"epochs", d.train.epochs},
          {"batch_size", d.train.batch_size},
          {"dropout_rate", d.train.dropout_rate},
          {"patience", d.train.patience},
          {"freeze_embeddings", d.train.freeze_embeddings}}},
    };
}

namespace {

// Rejects keys the defaults do not define, recursively.
void check_keys(const json& defaults, const json& given, const std::string& prefix) {
    if (!given.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!defaults.contains(key)) throw ConfigError("unknown config key: " + path);
        if (defaults[key].is_object()) check_keys(defaults[key], value, path);
    }
}

template <class T>
T get(const json& j, const char* section, const char* key) {
    const json& v = section ? j.at(section).at(key) : j.at(key);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config value ") + (section ? std::string(section) + "." : "") + key +
                          " has the wrong type: " + v.dump());
    }
}

}  // namespace

PipelineConfig config_from_json(const json& given) {
    json j = default_config_json();
    check_keys(j, given, "");
    j.merge_patch(given);

    PipelineConfig c;
    c.seed = get<std::uint64_t>(j, nullptr, "seed");
    c.threshold = get<double>(j, nullptr, "threshold");
    c.paths.corpus = get<std::string>(j, "paths", "corpus");
    c.paths.train = get<std::string>(j, "paths", "train");
    c.paths.val = get<std::string>(j, "paths", "val");
    c.paths.test = get<std::string>(j, "paths", "test");
    c.paths.lexicon = get<std::string>(j, "paths", "lexicon");
    c.paths.output = get<std::string>(j, "paths", "output");
    c.paths.vocab = get<std::string>(j, "paths", "vocab");
    c.paths.embeddings = get<std::string>(j, "paths", "embeddings");
    c.paths.model = get<std::string>(j, "paths", "model");
    c.paths.history = get<std::string>(j, "paths", "history");

    c.cleaning.strip_urls = get<bool>(j, "cleaning", "strip_urls");
    c.cleaning.strip_mentions = get<bool>(j, "cleaning", "strip_mentions");
    c.cleaning.strip_hashtags = get<bool>(j, "cleaning", "strip_hashtags");

    c.tokenizer.max_len = get<std::size_t>(j, "tokenizer", "max_len");
    c.tokenizer.min_count = get<int>(j, "tokenizer", "min_count");
    c.tokenizer.stop_chars = stop_set_from_string(get<std::string>(j, "tokenizer", "stop_chars"));
    if (c.tokenizer.max_len < 1) throw ConfigError("tokenizer.max_len must be >= 1");
    if (c.tokenizer.min_count < 1) throw ConfigError("tokenizer.min_count must be >= 1");

    c.train_frac = get<double>(j, "split", "train_frac");
    c.val_frac = get<double>(j, "split", "val_frac");

    const auto mode = get<std::string>(j, "w2v", "mode");
    if (mode == "cbow") c.w2v.mode = W2vMode::Cbow;
    else if (mode == "skipgram") c.w2v.mode = W2vMode::SkipGram;
    else throw ConfigError("w2v.mode must be \"cbow\" or \"skipgram\", got \"" + mode + "\"");
    c.w2v.window = get<int>(j, "w2v", "window");
    c.w2v.negatives = get<int>(j, "w2v", "negatives");
    c.w2v.learning_rate = get<double>(j, "w2v", "learning_rate");
    c.w2v.min_learning_rate = get<double>(j, "w2v", "min_learning_rate");
    c.w2v.epochs = get<int>(j, "w2v", "epochs");
    c.w2v.dim = get<int>(j, "w2v", "dim");
    if (!j["w2v"]["subsample_threshold"].is_null())
        c.w2v.subsample_threshold = get<double>(j, "w2v", "subsample_threshold");
    c.w2v.seed = c.seed;
    const auto fmt = get<std::string>(j, "w2v", "format");
    if (fmt == "binary") c.embedding_format = EmbeddingFormat::Binary;
    else if (fmt == "json") c.embedding_format = EmbeddingFormat::Json;
    else throw ConfigError("w2v.format must be \"binary\" or \"json\", got \"" + fmt + "\"");
    c.w2v.validate();

    c.hidden = get<int>(j, "network", "hidden");
    if (c.hidden < 1) throw ConfigError("network.hidden must be >= 1");

    c.train.learning_rate = get<double>(j, "train", "learning_rate");
    c.train.beta1 = get<double>(j, "train", "beta1");
    c.train.beta2 = get<double>(j, "train", "beta2");
    c.train.epsilon = get<double>(j, "train", "epsilon");
    c.train.epochs = get<int>(j, "train", "epochs");
    c.train.batch_size = get<int>(j, "train", "batch_size");
    c.train.dropout_rate = get<double>(j, "train", "dropout_rate");
    c.train.patience = get<int>(j, "train", "patience");
    c.train.freeze_embeddings = get<bool>(j, "train", "freeze_embeddings");
    c.train.seed = c.seed;
    c.train.validate();
    return c;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got \"" + assignment + "\"");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("bad --set key: " + key);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

namespace {

struct Context {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
    PipelineConfig cfg;
};

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError("no " + what + " path given");
    if (!fs::is_regular_file(path)) throw DataError(what + " file not found: " + path);
}

Corpus load_clean(const std::string& path, const CleaningConfig& rules, std::ostream& err) {
    auto cleaned = clean_corpus(load_corpus(path), rules);
    if (cleaned.dropped > 0)
        err << "warning: dropped " << cleaned.dropped << " review(s) from " << path << " that were empty after cleaning\n";
    return std::move(cleaned.corpus);
}

void emit(std::ostream& out, const json& j) { out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n'; }

int cmd_prelabel(Context& ctx) {
    const auto& p = ctx.cfg.paths;
    require_file(p.corpus, "input corpus");
    require_file(p.lexicon, "lexicon");
    const auto lexicon = load_lexicon(p.lexicon);
    Corpus corpus = load_clean(p.corpus, ctx.cfg.cleaning, ctx.err);
    const auto counts = prelabel_corpus(corpus, lexicon);
    if (p.output.empty()) write_jsonl(ctx.out, corpus);
    else save_corpus(p.output, corpus);
    ctx.err << counts.positive << " positive reviews and " << counts.negative << " negative reviews\n";
    if (!p.output.empty()) emit(ctx.out, {{"positive", counts.positive}, {"negative", counts.negative}});
    return 0;
}

int cmd_embed(Context& ctx) {
    const auto& c = ctx.cfg;
    require_file(c.paths.corpus, "corpus");
    const Corpus corpus = load_clean(c.paths.corpus, c.cleaning, ctx.err);
    if (corpus.empty()) throw DataError("cannot train embeddings on an empty corpus: " + c.paths.corpus);
    const auto vocab = build_vocab(corpus, c.tokenizer.min_count, c.tokenizer.stop_chars);
    std::vector<double> losses;
    const auto matrix = train_embeddings(encode_corpus(corpus, vocab, c.tokenizer.stop_chars), vocab, c.w2v, &losses);
    save_vocab(c.paths.vocab, vocab);
    save_embeddings(c.paths.embeddings, matrix, vocab, c.embedding_format);
    json report{{"vocab_size", vocab.size()},
                {"dim", matrix.dim()},
                {"epochs", c.w2v.epochs},
                {"final_loss", losses.empty() ? json(nullptr) : json(losses.back())},
                {"vocab", c.paths.vocab},
                {"embeddings", c.paths.embeddings}};
    emit(ctx.out, report);
    return 0;
}

Model model_from_config(const PipelineConfig& c, Vocabulary vocab, EmbeddingMatrix emb) {
    Model model = make_model(std::move(vocab), std::move(emb), c.hidden, c.seed);
    model.max_len = c.tokenizer.max_len;
    model.threshold = c.threshold;
    model.cleaning = c.cleaning;
    model.stop_chars = c.tokenizer.stop_chars;
    return model;
}

int cmd_train(Context& ctx) {
    const auto& c = ctx.cfg;
    require_file(c.paths.vocab, "vocabulary");
    require_file(c.paths.embeddings, "embeddings");
    Corpus train_corpus, val_corpus;
    if (!c.paths.train.empty() || !c.paths.val.empty()) {
        require_file(c.paths.train, "training corpus");
        require_file(c.paths.val, "validation corpus");
        train_corpus = load_clean(c.paths.train, c.cleaning, ctx.err);
        val_corpus = load_clean(c.paths.val, c.cleaning, ctx.err);
    } else {
        require_file(c.paths.corpus, "corpus");
        auto parts = split(load_clean(c.paths.corpus, c.cleaning, ctx.err), c.train_frac, c.val_frac, c.seed);
        train_corpus = std::move(parts.train);
        val_corpus = std::move(parts.val);
    }
    auto vocab = load_vocab(c.paths.vocab);
    auto emb = load_embeddings(c.paths.embeddings, vocab);
    Model model = model_from_config(c, std::move(vocab), std::move(emb));
    const auto train_set = make_dataset(train_corpus, model);
    const auto val_set = make_dataset(val_corpus, model);
    if (train_set.empty() || val_set.empty()) throw DataError("training and validation sets must be non-empty");

    auto result = train(train_set, val_set, std::move(model), c.train);
    std::optional<Metrics> best;
    if (!result.history.epochs.empty()) best = evaluate(result.model, val_set);
    save_model(c.paths.model, result.model, best);
    save_history(c.paths.history, result.history);

    json report{{"best_epoch", result.history.best_epoch},
                {"epochs_run", result.history.epochs.size()},
                {"stopped_early", result.history.stopped_early},
                {"model", c.paths.model},
                {"history", c.paths.history}};
    report["val_metrics"] = best ? metrics_to_json(*best) : json(nullptr);
    emit(ctx.out, report);
    return 0;
}

int cmd_evaluate(Context& ctx) {
    const auto& c = ctx.cfg;
    require_file(c.paths.model, "model");
    require_file(c.paths.test, "test corpus");
    const Model model = load_model(c.paths.model);
    const Corpus test = load_clean(c.paths.test, model.cleaning, ctx.err);
    if (!test.fully_labeled()) throw DataError("labels required: " + c.paths.test + " contains unlabeled reviews");
    const auto data = make_dataset(test, model);
    emit(ctx.out, metrics_to_json(evaluate(model, data, c.threshold)));
    return 0;
}

int cmd_predict(Context& ctx, const std::vector<std::string>& texts) {
    const auto& c = ctx.cfg;
    require_file(c.paths.model, "model");
    const Model model = load_model(c.paths.model);
    auto one = [&](const std::string& line) {
        try {
            const auto pred = predict(line, model, c.threshold);
            emit(ctx.out, {{"label", pred.label}, {"p", pred.p}});
        } catch (const DataError& e) {
            emit(ctx.out, {{"error", e.what()}});
        }
        ctx.out.flush();
    };
    if (!texts.empty()) {
        for (const auto& t : texts) one(t);
        return 0;
    }
    std::string line;
    while (std::getline(ctx.in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        one(line);
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Character-level LSTM sentiment classifier: prelabel, embed, train, evaluate, predict.", "senti"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stage (overrides config)");
    app.add_option("--set", overrides, "Override a config value, e.g. --set w2v.dim=16")->take_all();

    std::string corpus_path, lexicon_path, output_path, vocab_path, emb_path, model_path, history_path, train_path,
        val_path, test_path, mode, format;
    std::vector<std::string> texts;

    auto* prelabel_cmd = app.add_subcommand("prelabel", "Clean a corpus and label it with a polarity lexicon");
    prelabel_cmd->add_option("--input", corpus_path, "Input corpus (.jsonl or .csv)");
    prelabel_cmd->add_option("--lexicon", lexicon_path, "Lexicon JSONL {token, weight}");
    prelabel_cmd->add_option("--output", output_path, "Labeled JSONL output (stdout when omitted)");

    auto* embed_cmd = app.add_subcommand("embed", "Build the vocabulary and train Word2Vec character embeddings");
    embed_cmd->add_option("--corpus", corpus_path, "Corpus (.jsonl or .csv)");
    embed_cmd->add_option("--vocab", vocab_path, "Vocabulary output");
    embed_cmd->add_option("--embeddings", emb_path, "Embedding output");
    embed_cmd->add_option("--mode", mode, "cbow | skipgram");
    embed_cmd->add_option("--format", format, "binary | json");

    auto* train_cmd = app.add_subcommand("train", "Train the LSTM classifier with Adam and early stopping");
    train_cmd->add_option("--corpus", corpus_path, "Labeled corpus to split into train/val");
    train_cmd->add_option("--train", train_path, "Explicit training corpus");
    train_cmd->add_option("--val", val_path, "Explicit validation corpus");
    train_cmd->add_option("--vocab", vocab_path, "Vocabulary file");
    train_cmd->add_option("--embeddings", emb_path, "Embedding file");
    train_cmd->add_option("--model", model_path, "Model output");
    train_cmd->add_option("--history", history_path, "History output");

    auto* eval_cmd = app.add_subcommand("evaluate", "Print loss, MAE, accuracy, precision and recall as JSON");
    eval_cmd->add_option("--model", model_path, "Model file");
    eval_cmd->add_option("--test", test_path, "Labeled test corpus");

    auto* predict_cmd = app.add_subcommand("predict", "Classify --text values or stdin lines; one JSON object per line");
    predict_cmd->add_option("--model", model_path, "Model file");
    predict_cmd->add_option("--text", texts, "Text to classify (repeatable)");

    for (auto* sub : {prelabel_cmd, embed_cmd, train_cmd, eval_cmd, predict_cmd}) sub->fallthrough();
    app.footer("Configuration defaults (override with --config FILE or --set key=value):\n" +
               default_config_json().dump(2) +
               "\n\nExit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::Config);
    }

    try {
        json given = json::object();
        if (!config_path.empty()) {
            std::ifstream f(config_path, std::ios::binary);
            if (!f) throw ConfigError("cannot open config file: " + config_path);
            try {
                given = json::parse(f);
            } catch (const json::exception&) {
                throw ConfigError("malformed config file: " + config_path);
            }
        }
        for (const auto& o : overrides) apply_override(given, o);
        if (*seed_opt) given["seed"] = seed;
        Context ctx{in, out, err, config_from_json(given)};
        auto& p = ctx.cfg.paths;
        auto take = [](std::string& dst, const std::string& src) {
            if (!src.empty()) dst = src;
        };
        take(p.corpus, corpus_path);
        take(p.lexicon, lexicon_path);
        take(p.output, output_path);
        take(p.vocab, vocab_path);
        take(p.embeddings, emb_path);
        take(p.model, model_path);
        take(p.history, history_path);
        take(p.train, train_path);
        take(p.val, val_path);
        take(p.test, test_path);
        if (!mode.empty()) {
            if (mode == "cbow") ctx.cfg.w2v.mode = W2vMode::Cbow;
            else if (mode == "skipgram") ctx.cfg.w2v.mode = W2vMode::SkipGram;
            else throw ConfigError("--mode must be cbow or skipgram");
        }
        if (!format.empty()) {
            if (format == "binary") ctx.cfg.embedding_format = EmbeddingFormat::Binary;
            else if (format == "json") ctx.cfg.embedding_format = EmbeddingFormat::Json;
            else throw ConfigError("--format must be binary or json");
        }

        if (prelabel_cmd->parsed()) return cmd_prelabel(ctx);
        if (embed_cmd->parsed()) return cmd_embed(ctx);
        if (train_cmd->parsed()) return cmd_train(ctx);
        if (eval_cmd->parsed()) return cmd_evaluate(ctx);
        if (predict_cmd->parsed()) return cmd_predict(ctx, texts);
        return static_cast<int>(ErrorKind::Config);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::Data);
    }
}

}  // namespace senti::cli
