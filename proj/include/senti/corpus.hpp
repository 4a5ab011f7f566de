#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace senti {

using Label = int;  // 0 = negative, 1 = positive

struct Review {
    std::string text;
    std::optional<Label> label;
    std::optional<std::string> source_id;

    friend bool operator==(const Review&, const Review&) = default;
};

struct Corpus {
    std::string name;
    std::vector<Review> reviews;

    std::size_t size() const noexcept { return reviews.size(); }
    bool empty() const noexcept { return reviews.empty(); }
    bool fully_labeled() const noexcept;
};

enum class CorpusFormat { Jsonl, Csv };

/// Picks Csv for a ".csv" extension and Jsonl otherwise.
CorpusFormat format_for_path(const std::filesystem::path& path);

/// Reads one Review per record in file order. Errors name the offending line.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
inline Corpus load_corpus(const std::filesystem::path& path) {
    return load_corpus(path, format_for_path(path));
}

void write_jsonl(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

struct CleaningConfig {
    bool strip_urls = true;
    bool strip_mentions = true;
    bool strip_hashtags = true;
};

/// Removes URLs (scheme://... up to the next space), @-mentions and the '#' of
/// hashtags, then collapses whitespace runs to one space and trims. Idempotent.
std::string clean_text(std::string_view raw, const CleaningConfig& rules = {});

struct CleanedCorpus {
    Corpus corpus;
    std::size_t dropped = 0;  // reviews that were empty after cleaning
};

CleanedCorpus clean_corpus(const Corpus& corpus, const CleaningConfig& rules = {});

struct PolarityLexicon {
    std::map<std::string, double> entries;

    double weight(const std::string& token) const;
};

/// JSONL with {"token": ..., "weight": ...}; rejects non-finite weights.
PolarityLexicon load_lexicon(const std::filesystem::path& path);

struct Prelabel {
    Label label;
    double score;
};

/// Sums lexicon weights over the character tokens of `text`; score >= 0 is positive.
Prelabel prelabel(std::string_view text, const PolarityLexicon& lexicon);

struct LabelCounts {
    std::size_t positive = 0;
    std::size_t negative = 0;
};

/// Overwrites every review's label with its prelabel.
LabelCounts prelabel_corpus(Corpus& corpus, const PolarityLexicon& lexicon);

struct Split {
    Corpus train;
    Corpus val;
    Corpus test;
};

/// Seeded shuffle then partition into floor(n*train_frac), floor(n*val_frac)
/// and the remainder.
Split split(const Corpus& corpus, double train_frac, double val_frac, std::uint64_t seed);

}  // namespace senti
