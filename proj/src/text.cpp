#include "capgen/text.hpp"

#include <fstream>
#include <stdexcept>

namespace capgen {

namespace {

bool is_ascii_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_ascii_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

constexpr const char* kSpecialTokens[] = {"<unk>", "<pad>", "<bos>", "<eos>"};

}  // namespace

std::vector<std::string> normalize_tokenize(std::string_view caption) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char ch : caption) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_ascii_space(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else if (!is_ascii_punct(c)) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Vocab::Vocab() {
    for (const char* special : kSpecialTokens) add(special);
}

void Vocab::add(const std::string& token) {
    if (ids_.count(token)) return;
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

Vocab Vocab::build(std::span<const std::string> captions) {
    if (captions.empty()) throw std::invalid_argument("Vocab::build: empty corpus");
    Vocab vocab;
    for (const std::string& caption : captions)
        for (const std::string& token : normalize_tokenize(caption)) vocab.add(token);
    return vocab;
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab file " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.size() < kSpecialCount)
        throw std::runtime_error("vocab file " + path.string() + " is missing the special tokens");
    for (std::size_t i = 0; i < kSpecialCount; ++i)
        if (lines[i] != kSpecialTokens[i])
            throw std::runtime_error("vocab file " + path.string() + ": line " + std::to_string(i + 1) +
                                     " must be " + kSpecialTokens[i]);
    Vocab vocab;
    for (std::size_t i = kSpecialCount; i < lines.size(); ++i) {
        if (vocab.contains(lines[i]))
            throw std::runtime_error("vocab file " + path.string() + ": duplicate token '" + lines[i] + "'");
        vocab.add(lines[i]);
    }
    return vocab;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file " + path.string());
    for (const std::string& token : tokens_) out << token << '\n';
}

int Vocab::id(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocab of " +
                                std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> encode_caption(std::span<const std::string> tokens, const Vocab& vocab, std::size_t max_len) {
    if (tokens.size() + 2 > max_len)
        throw std::invalid_argument("encode_caption: " + std::to_string(tokens.size()) +
                                    " tokens plus bos/eos exceed max_len " + std::to_string(max_len));
    std::vector<int> ids;
    ids.reserve(max_len);
    ids.push_back(Vocab::kBos);
    for (const std::string& token : tokens) ids.push_back(vocab.id(token));
    ids.push_back(Vocab::kEos);
    ids.resize(max_len, Vocab::kPad);
    return ids;
}

std::string decode_ids(std::span<const int> ids, const Vocab& vocab) {
    std::vector<std::string> words;
    for (const int id : ids) {
        if (id == Vocab::kEos) break;
        if (Vocab::is_special(id)) continue;
        words.push_back(vocab.token(id));
    }
    return join_tokens(words);
}

}  // namespace capgen
