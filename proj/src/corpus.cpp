#include "senti/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "senti/error.hpp"
#include "senti/rng.hpp"
#include "senti/tokenizer.hpp"
#include "senti/utf8.hpp"

namespace senti {

using nlohmann::json;

bool Corpus::fully_labeled() const noexcept {
    return std::all_of(reviews.begin(), reviews.end(), [](const Review& r) { return r.label.has_value(); });
}

CorpusFormat format_for_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? CorpusFormat::Csv : CorpusFormat::Jsonl;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    return in;
}

bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

Label parse_label_value(const json& v, const std::string& where) {
    if (v.is_number_integer() || v.is_number_unsigned()) {
        const auto x = v.get<long long>();
        if (x == 0 || x == 1) return static_cast<Label>(x);
    }
    throw DataError(where + ": label must be 0 or 1, got " + v.dump());
}

Corpus load_jsonl(const std::filesystem::path& path) {
    auto in = open_input(path);
    Corpus corpus;
    corpus.name = path.stem().string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": malformed JSON record");
        }
        if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string())
            throw DataError(where + ": record needs a string \"text\" field");
        Review r;
        r.text = obj["text"].get<std::string>();
        if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) r.label = parse_label_value(*it, where);
        if (auto it = obj.find("source_id"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) throw DataError(where + ": source_id must be a string");
            r.source_id = it->get<std::string>();
        }
        corpus.reviews.push_back(std::move(r));
    }
    return corpus;
}

// RFC 4180 records; returns false at end of input. `lineno` tracks physical lines.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& lineno) {
    fields.clear();
    int c = in.peek();
    if (c == EOF) return false;
    ++lineno;
    std::string field;
    bool quoted = false;
    bool any = false;
    while (true) {
        c = in.get();
        if (c == EOF) {
            if (quoted) throw DataError("unterminated quoted field");
            break;
        }
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++lineno;
                field.push_back(static_cast<char>(c));
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r' && in.peek() == '\n') {
            continue;
        } else if (c == '\n') {
            break;
        } else {
            field.push_back(static_cast<char>(c));
        }
    }
    if (any) fields.push_back(std::move(field));
    return true;
}

Corpus load_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    Corpus corpus;
    corpus.name = path.stem().string();
    std::vector<std::string> fields;
    std::size_t lineno = 0;
    auto read = [&](std::vector<std::string>& f) {
        try {
            return read_csv_record(in, f, lineno);
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    };
    if (!read(fields)) return corpus;
    int text_col = -1, label_col = -1, source_col = -1;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        std::string name = fields[i];
        if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
        if (name == "text") text_col = static_cast<int>(i);
        else if (name == "label") label_col = static_cast<int>(i);
        else if (name == "source_id") source_col = static_cast<int>(i);
    }
    if (text_col < 0) throw DataError(path.string() + ":1: CSV header needs a \"text\" column");
    while (true) {
        const std::size_t start = lineno + 1;
        if (!read(fields)) break;
        if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
        const std::string where = path.string() + ":" + std::to_string(start);
        auto get = [&](int col) -> const std::string* {
            return col >= 0 && static_cast<std::size_t>(col) < fields.size() ? &fields[col] : nullptr;
        };
        Review r;
        if (const auto* t = get(text_col)) r.text = *t;
        else throw DataError(where + ": missing text field");
        if (const auto* l = get(label_col); l && !l->empty()) {
            if (*l == "0") r.label = 0;
            else if (*l == "1") r.label = 1;
            else throw DataError(where + ": label must be 0 or 1, got \"" + *l + "\"");
        }
        if (const auto* s = get(source_col); s && !s->empty()) r.source_id = *s;
        corpus.reviews.push_back(std::move(r));
    }
    return corpus;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    return format == CorpusFormat::Csv ? load_csv(path) : load_jsonl(path);
}

void write_jsonl(std::ostream& out, const Corpus& corpus) {
    for (const auto& r : corpus.reviews) {
        json obj;
        obj["text"] = r.text;
        if (r.label) obj["label"] = *r.label;
        if (r.source_id) obj["source_id"] = *r.source_id;
        out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    write_jsonl(out, corpus);
}

namespace {

bool is_scheme_char(char32_t c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '+' || c == '.' ||
           c == '-';
}

bool is_alpha(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

// Position where a URL starts in `word`, or npos. The scheme is the run of
// scheme characters before "://", trimmed to begin with a letter.
std::size_t find_url(const std::u32string& word) {
    for (std::size_t q = 0; q + 2 < word.size(); ++q) {
        if (word[q] != ':' || word[q + 1] != '/' || word[q + 2] != '/') continue;
        std::size_t s = q;
        while (s > 0 && is_scheme_char(word[s - 1])) --s;
        while (s < q && !is_alpha(word[s])) ++s;
        if (s < q) return s;
    }
    return std::u32string::npos;
}

std::size_t find_mention(const std::u32string& word) {
    for (std::size_t i = 0; i + 1 < word.size(); ++i)
        if (word[i] == '@') return i;
    return std::u32string::npos;
}

}  // namespace

std::string clean_text(std::string_view raw, const CleaningConfig& rules) {
    std::u32string text = utf8::decode(raw);
    if (rules.strip_hashtags) std::erase(text, U'#');

    std::u32string out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && utf8::is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !utf8::is_space(text[j])) ++j;
        if (j == i) break;
        std::u32string word = text.substr(i, j - i);
        std::size_t cut = word.size();
        if (rules.strip_mentions) cut = std::min(cut, find_mention(word));
        if (rules.strip_urls) cut = std::min(cut, find_url(word));
        word.resize(cut);
        if (!word.empty()) {
            if (!out.empty()) out.push_back(U' ');
            out += word;
        }
        i = j;
    }
    return utf8::encode(out);
}

CleanedCorpus clean_corpus(const Corpus& corpus, const CleaningConfig& rules) {
    CleanedCorpus result;
    result.corpus.name = corpus.name;
    for (const auto& r : corpus.reviews) {
        Review cleaned = r;
        cleaned.text = clean_text(r.text, rules);
        if (cleaned.text.empty()) {
            ++result.dropped;
            continue;
        }
        result.corpus.reviews.push_back(std::move(cleaned));
    }
    return result;
}

double PolarityLexicon::weight(const std::string& token) const {
    const auto it = entries.find(token);
    return it == entries.end() ? 0.0 : it->second;
}

PolarityLexicon load_lexicon(const std::filesystem::path& path) {
    auto in = open_input(path);
    PolarityLexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::out_of_range&) {
            throw DataError(where + ": number out of range");
        } catch (const json::exception&) {
            throw DataError(where + ": malformed JSON record");
        }
        if (!obj.is_object() || !obj.contains("token") || !obj["token"].is_string() || !obj.contains("weight") ||
            !obj["weight"].is_number())
            throw DataError(where + ": lexicon record needs \"token\" (string) and \"weight\" (number)");
        const double w = obj["weight"].get<double>();
        if (!std::isfinite(w)) throw DataError(where + ": weight must be finite");
        lex.entries[obj["token"].get<std::string>()] = w;
    }
    return lex;
}

Prelabel prelabel(std::string_view text, const PolarityLexicon& lexicon) {
    double score = 0.0;
    for (const auto& tok : segment_chars(text)) score += lexicon.weight(tok);
    return {score >= 0.0 ? 1 : 0, score};
}

LabelCounts prelabel_corpus(Corpus& corpus, const PolarityLexicon& lexicon) {
    LabelCounts counts;
    for (auto& r : corpus.reviews) {
        r.label = prelabel(r.text, lexicon).label;
        (*r.label == 1 ? counts.positive : counts.negative) += 1;
    }
    return counts;
}

Split split(const Corpus& corpus, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac > 1.0 + 1e-12)
        throw ConfigError("split fractions out of range: train=" + std::to_string(train_frac) +
                          " val=" + std::to_string(val_frac));
    const std::size_t n = corpus.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto rng = substream(seed, "split");
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    const auto n_train = std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_frac + 1e-9)));

    Split out;
    out.train.name = corpus.name + ".train";
    out.val.name = corpus.name + ".val";
    out.test.name = corpus.name + ".test";
    for (std::size_t k = 0; k < n; ++k) {
        auto& dst = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
        dst.reviews.push_back(corpus.reviews[order[k]]);
    }
    return out;
}

}  // namespace senti
