#include "hybrank/corpus_io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "hybrank/binary_io.hpp"
#include "hybrank/error.hpp"

namespace hybrank {

namespace {

std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return in;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) fields.push_back(std::move(f));
    return fields;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, long long& out) {
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    by_id_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (docs_[i].id.empty()) throw Error("document at position " + std::to_string(i + 1) + " has an empty id");
        if (!by_id_.emplace(docs_[i].id, i).second) throw Error("duplicate document id '" + docs_[i].id + "'");
    }
}

const Document& Corpus::at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw LookupError("document", id);
    return docs_[it->second];
}

Corpus load_corpus(const std::filesystem::path& path) {
    auto in = open_text(path);
    std::vector<Document> docs;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string(), lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") || !obj["id"].is_string() ||
            !obj["text"].is_string()) {
            throw ParseError(path.string(), lineno, "expected an object with string \"id\" and \"text\"");
        }
        Document d;
        d.id = obj["id"].get<std::string>();
        d.text = obj["text"].get<std::string>();
        if (auto t = obj.find("title"); t != obj.end() && t->is_string()) d.title = t->get<std::string>();
        if (d.id.empty()) throw ParseError(path.string(), lineno, "empty document id");
        if (auto [it, fresh] = seen.emplace(d.id, lineno); !fresh) {
            throw ParseError(path.string(), lineno,
                             "duplicate document id '" + d.id + "' (first seen on line " +
                                 std::to_string(it->second) + ")");
        }
        docs.push_back(std::move(d));
    }
    return Corpus(std::move(docs));
}

Run load_run(const std::filesystem::path& path, std::size_t max_depth) {
    if (max_depth == 0) throw Error("load_run: max_depth must be positive");
    auto in = open_text(path);
    Run run;
    std::map<std::string, std::set<std::string>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto f = split_ws(line);
        if (f.size() != 6) throw ParseError(path.string(), lineno, "expected 6 columns, got " + std::to_string(f.size()));
        double score = 0.0;
        if (!parse_double(f[4], score) || !std::isfinite(score)) {
            throw ParseError(path.string(), lineno, "non-numeric score '" + f[4] + "'");
        }
        if (!seen[f[0]].insert(f[2]).second) {
            throw ParseError(path.string(), lineno, "duplicate entry for query '" + f[0] + "', doc '" + f[2] + "'");
        }
        run[f[0]].push_back({f[2], score});
    }
    for (auto& [qid, list] : run) {
        std::stable_sort(list.begin(), list.end(),
                         [](const ScoredDoc& a, const ScoredDoc& b) { return a.score > b.score; });
        if (list.size() > max_depth) list.resize(max_depth);
    }
    return run;
}

Qrels load_qrels(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    auto in = open_text(path);
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto f = split_ws(line);
        if (f.size() != 4) throw ParseError(path.string(), lineno, "expected 4 columns, got " + std::to_string(f.size()));
        long long grade = 0;
        if (!parse_int(f[3], grade)) throw ParseError(path.string(), lineno, "non-integer grade '" + f[3] + "'");
        if (grade < 0) throw ParseError(path.string(), lineno, "negative grade " + f[3]);
        auto& slot = qrels[f[0]];
        auto [it, fresh] = slot.emplace(f[2], static_cast<int>(grade));
        if (!fresh) {
            if (warnings) {
                warnings->push_back(path.string() + ":" + std::to_string(lineno) + ": duplicate judgment for (" +
                                    f[0] + ", " + f[2] + "); keeping the later grade");
            }
            it->second = static_cast<int>(grade);
        }
    }
    return qrels;
}

QuerySet load_queries(const std::filesystem::path& path) {
    auto in = open_text(path);
    QuerySet queries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        std::string id;
        std::string text;
        if (line.front() == '{') {
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(path.string(), lineno, std::string("malformed JSON: ") + e.what());
            }
            if (!obj.contains("id") || !obj.contains("text")) {
                throw ParseError(path.string(), lineno, "expected \"id\" and \"text\"");
            }
            id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
            text = obj["text"].get<std::string>();
        } else {
            const auto cut = line.find_first_of(" \t");
            id = line.substr(0, cut);
            if (cut != std::string::npos) {
                const auto start = line.find_first_not_of(" \t", cut);
                if (start != std::string::npos) text = line.substr(start);
            }
        }
        if (!queries.emplace(id, text).second) throw ParseError(path.string(), lineno, "duplicate query id '" + id + "'");
    }
    return queries;
}

std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", score);
    return buf;
}

void write_run(const Run& run, const std::filesystem::path& path, const std::string& tag) {
    io::write_atomically(path, [&](std::ostream& out) {
        for (const auto& [qid, list] : run) {
            std::size_t rank = 1;
            for (const auto& d : list) {
                out << qid << " Q0 " << d.doc_id << ' ' << rank++ << ' ' << format_score(d.score) << ' ' << tag << '\n';
            }
        }
    });
}

}  // namespace hybrank
