#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "senti/corpus.hpp"

namespace senti {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// One UTF-8 token per Unicode scalar value; whitespace and any character in
/// `stop_chars` is dropped.
std::vector<std::string> segment_chars(std::string_view text, const std::set<char32_t>& stop_chars = {});

class Vocabulary {
public:
    Vocabulary();

    /// `tokens` are the regular entries, assigned ids 2, 3, ... in order.
    Vocabulary(std::vector<std::string> tokens, int min_count);

    std::size_t size() const noexcept { return id_to_token_.size(); }
    int min_count() const noexcept { return min_count_; }

    TokenId id(const std::string& token) const;  // kUnkId for OOV
    bool contains(const std::string& token) const;
    const std::string& token(TokenId id) const;

    /// Regular tokens only (ids 2..).
    std::vector<std::string> tokens() const;

    /// FNV-1a over the ordered token list; binds embeddings to this vocabulary.
    std::uint64_t hash() const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.min_count_ == b.min_count_ && a.id_to_token_ == b.id_to_token_;
    }

private:
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
    int min_count_ = 1;
};

/// Frequency-descending ids from 2, ties by codepoint; PAD=0, UNK=1.
Vocabulary build_vocab(const Corpus& corpus, int min_count, const std::set<char32_t>& stop_chars = {});

struct TokenSequence {
    std::vector<TokenId> ids;  // exactly max_len entries
    std::size_t true_length = 0;

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Maps to ids (UNK for OOV), keeps the head on truncation and right-pads with PAD.
TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab, std::size_t max_len);

/// Tokens for the non-PAD prefix.
std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab);

/// {"min_count": n, "tokens": [...]} with PAD/UNK implicit.
void save_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::filesystem::path& path);

std::string hash_hex(std::uint64_t h);
std::uint64_t parse_hash_hex(std::string_view hex);

struct TokenizerConfig {
    std::size_t max_len = 120;
    int min_count = 1;
    std::set<char32_t> stop_chars;
};

std::set<char32_t> stop_set_from_string(std::string_view chars);
std::string stop_set_to_string(const std::set<char32_t>& chars);

}  // namespace senti
