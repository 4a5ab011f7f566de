#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "senti/corpus.hpp"
#include "senti/embedding.hpp"
#include "senti/tokenizer.hpp"
#include "senti/training.hpp"

namespace senti::cli {

/// Every setting of one experiment. Loaded from the defaults, then a JSON
/// config file, then `--set key=value` overrides, then `--seed`.
struct PipelineConfig {
    std::uint64_t seed = 42;
    double threshold = 0.5;

    struct Paths {
        std::string corpus, train, val, test, lexicon, output;
        std::string vocab = "vocab.json";
        std::string embeddings = "embeddings.w2v";
        std::string model = "model.ssm";
        std::string history = "history.json";
    } paths;

    CleaningConfig cleaning;
    TokenizerConfig tokenizer;
    double train_frac = 0.8;
    double val_frac = 0.1;
    W2vConfig w2v;
    EmbeddingFormat embedding_format = EmbeddingFormat::Binary;
    int hidden = 128;
    TrainConfig train;
};

nlohmann::json default_config_json();

/// Throws ConfigError on unknown keys or ill-typed values.
PipelineConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" to `j`; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Runs the CLI with `args` (excluding argv[0]). Returns the process exit code:
/// 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace senti::cli
