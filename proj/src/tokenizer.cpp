#include "senti/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "senti/error.hpp"
#include "senti/rng.hpp"
#include "senti/utf8.hpp"

namespace senti {

using nlohmann::json;

std::vector<std::string> segment_chars(std::string_view text, const std::set<char32_t>& stop_chars) {
    std::vector<std::string> out;
    for (char32_t cp : utf8::decode(text)) {
        if (utf8::is_space(cp) || stop_chars.contains(cp)) continue;
        out.push_back(utf8::encode(cp));
    }
    return out;
}

Vocabulary::Vocabulary() : id_to_token_{std::string(kPadToken), std::string(kUnkToken)} {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int min_count) : Vocabulary() {
    min_count_ = min_count;
    for (auto& t : tokens) {
        const auto id = static_cast<TokenId>(id_to_token_.size());
        if (!token_to_id_.emplace(t, id).second) throw DataError("duplicate vocabulary token: " + t);
        id_to_token_.push_back(std::move(t));
    }
}

TokenId Vocabulary::id(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.contains(token); }

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw DataError("token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::tokens() const { return {id_to_token_.begin() + 2, id_to_token_.end()}; }

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = fnv1a64("senti-vocab");
    for (std::size_t i = 2; i < id_to_token_.size(); ++i) {
        h = fnv1a64(id_to_token_[i], h);
        h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
}

Vocabulary build_vocab(const Corpus& corpus, int min_count, const std::set<char32_t>& stop_chars) {
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::map<char32_t, long long> freq;
    for (const auto& r : corpus.reviews)
        for (char32_t cp : utf8::decode(r.text))
            if (!utf8::is_space(cp) && !stop_chars.contains(cp)) ++freq[cp];

    std::vector<std::pair<char32_t, long long>> kept;
    for (const auto& [cp, n] : freq)
        if (n >= min_count) kept.emplace_back(cp, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (const auto& [cp, n] : kept) tokens.push_back(utf8::encode(cp));
    return Vocabulary(std::move(tokens), min_count);
}

TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    TokenSequence seq;
    seq.true_length = std::min(tokens.size(), max_len);
    seq.ids.assign(max_len, kPadId);
    for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id(tokens[i]);
    return seq;
}

std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < seq.true_length; ++i) out.push_back(vocab.token(seq.ids[i]));
    return out;
}

void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    json j;
    j["min_count"] = vocab.min_count();
    j["tokens"] = vocab.tokens();
    out << j.dump() << '\n';
}

Vocabulary load_vocab(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        throw DataError(path.string() + ": malformed vocabulary JSON");
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array() || !j.contains("min_count"))
        throw DataError(path.string() + ": vocabulary needs \"min_count\" and \"tokens\"");
    return Vocabulary(j["tokens"].get<std::vector<std::string>>(), j["min_count"].get<int>());
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t parse_hash_hex(std::string_view hex) {
    std::uint64_t h = 0;
    const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), h, 16);
    if (ec != std::errc{} || ptr != hex.data() + hex.size()) throw DataError("bad vocabulary hash: " + std::string(hex));
    return h;
}

std::set<char32_t> stop_set_from_string(std::string_view chars) {
    const auto cps = utf8::decode(chars);
    return {cps.begin(), cps.end()};
}

std::string stop_set_to_string(const std::set<char32_t>& chars) {
    return utf8::encode(std::u32string(chars.begin(), chars.end()));
}

}  // namespace senti
