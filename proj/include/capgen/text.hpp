#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace capgen {

// Lowercases ASCII letters, deletes ASCII punctuation and splits on
// whitespace. Non-ASCII bytes pass through untouched.
std::vector<std::string> normalize_tokenize(std::string_view caption);

std::string join_tokens(std::span<const std::string> tokens);

class Vocab {
public:
    static constexpr int kUnk = 0;
    static constexpr int kPad = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr std::size_t kSpecialCount = 4;

    // Specials only.
    Vocab();

    // Specials, then tokens in first-occurrence order across the corpus.
    static Vocab build(std::span<const std::string> captions);

    // One token per line, specials first.
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    int id(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const { return ids_.count(token) != 0; }
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }
    static bool is_special(int id) { return id >= 0 && id < static_cast<int>(kSpecialCount); }

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    void add(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// bos + ids + eos, padded with pad to exactly max_len entries.
std::vector<int> encode_caption(std::span<const std::string> tokens, const Vocab& vocab, std::size_t max_len);

// Stops at the first eos and skips special ids.
std::string decode_ids(std::span<const int> ids, const Vocab& vocab);

}  // namespace capgen
