#include "ul/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ul {

std::string to_string(NliLabel l) {
    switch (l) {
        case NliLabel::entail: return "E";
        case NliLabel::triple_entail: return "TE";
        case NliLabel::neutral: return "N";
        case NliLabel::contradict: return "C";
    }
    return "?";
}

NliLabel nli_label_from_string(const std::string& s) {
    if (s == "E") return NliLabel::entail;
    if (s == "TE") return NliLabel::triple_entail;
    if (s == "N") return NliLabel::neutral;
    if (s == "C") return NliLabel::contradict;
    throw std::runtime_error("unknown label '" + s + "'");
}

std::string corpus_line(const DialogueExample& ex) {
    nlohmann::ordered_json j;
    j["context"] = ex.context;
    j["history"] = ex.history;
    j["target"] = ex.target;
    if (ex.label) j["label"] = to_string(*ex.label);
    if (ex.negative) j["negative"] = *ex.negative;
    return j.dump();
}

DialogueExample parse_corpus_line(const std::string& line, size_t line_no) {
    const std::string where = "corpus line " + std::to_string(line_no);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error(where + ": record is not an object");

    DialogueExample ex;
    for (const auto& [key, value] : j.items()) {
        if (key == "context") {
            ex.context = value.get<std::vector<std::string>>();
        } else if (key == "history") {
            ex.history = value.get<std::vector<std::string>>();
        } else if (key == "target") {
            ex.target = value.get<std::string>();
        } else if (key == "label") {
            try {
                ex.label = nli_label_from_string(value.get<std::string>());
            } catch (const std::exception& e) {
                throw std::runtime_error(where + ": " + e.what());
            }
        } else if (key == "negative") {
            ex.negative = value.get<std::string>();
        } else {
            throw std::runtime_error(where + ": unknown field '" + key + "'");
        }
    }
    if (!j.contains("target") || ex.target.empty()) {
        throw std::runtime_error(where + ": missing or empty target");
    }
    return ex;
}

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("corpus: cannot read " + path);
    Corpus corpus;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        corpus.push_back(parse_corpus_line(line, line_no));
    }
    return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("corpus: cannot write " + path);
    for (const auto& ex : corpus) out << corpus_line(ex) << '\n';
    if (!out) throw std::runtime_error("corpus: write failed for " + path);
}

TokenizedExample tokenize_example(const Vocabulary& vocab, const DialogueExample& ex) {
    TokenizedExample out;
    for (const auto& s : ex.context) out.context_sents.push_back(vocab.tokenize(s));
    for (const auto& u : ex.history) out.history.push_back(vocab.tokenize(u));
    out.target = vocab.tokenize(ex.target);
    out.label = ex.label;
    if (ex.negative) out.negative = vocab.tokenize(*ex.negative);
    return out;
}

std::vector<std::string> corpus_texts(const Corpus& corpus) {
    std::vector<std::string> texts;
    for (const auto& ex : corpus) {
        for (const auto& s : ex.context) texts.push_back(s);
        for (const auto& u : ex.history) texts.push_back(u);
        texts.push_back(ex.target);
        if (ex.negative) texts.push_back(*ex.negative);
    }
    return texts;
}

}  // namespace ul
