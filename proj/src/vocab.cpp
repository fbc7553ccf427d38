#include "ul/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ul {

namespace {
const char* kReservedNames[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '\''; }
}  // namespace

Vocabulary::Vocabulary() {
    for (int i = 0; i < kNumReserved; ++i) {
        tokens_.emplace_back(kReservedNames[i]);
        ids_.emplace(kReservedNames[i], i);
    }
}

TokenId Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

TokenId Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) > 0; }

const std::string& Vocabulary::token_of(TokenId id) const {
    if (id < 0 || id >= size()) throw std::runtime_error("vocabulary: id out of range");
    return tokens_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            // punctuation becomes its own token
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
            words.emplace_back(1, static_cast<char>(c));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

TokenSeq Vocabulary::tokenize(const std::string& text) const {
    TokenSeq ids;
    for (const auto& w : split_words(text)) ids.push_back(id_of(w));
    return ids;
}

std::string Vocabulary::detokenize(const TokenSeq& ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!out.empty()) out += ' ';
        out += token_of(id);
    }
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts) {
        for (auto& w : split_words(t)) words.insert(std::move(w));
    }
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
}

std::string Vocabulary::to_text() const {
    std::string out;
    for (int i = kNumReserved; i < size(); ++i) {
        out += tokens_[static_cast<size_t>(i)];
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.add(line);
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
    out << to_text();
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("vocabulary: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

}  // namespace ul
