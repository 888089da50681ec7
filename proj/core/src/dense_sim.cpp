#include "hybrank/dense_sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hybrank/binary_io.hpp"
#include "hybrank/error.hpp"

namespace hybrank {

namespace {
constexpr io::Magic kEmbMagic = io::make_magic("HYBEMB1");
}

void EmbeddingStore::add(const std::string& id, std::span<const float> vec) {
    if (vec.size() != dim_) {
        throw ShapeError("embedding '" + id + "' has dimension " + std::to_string(vec.size()) + ", expected " +
                         std::to_string(dim_));
    }
    for (std::size_t k = 0; k < vec.size(); ++k) {
        if (!std::isfinite(vec[k])) throw Error("embedding '" + id + "' has a non-finite value at column " + std::to_string(k));
    }
    if (!rows_.emplace(id, ids_.size()).second) throw Error("duplicate embedding id '" + id + "'");
    ids_.push_back(id);
    data_.insert(data_.end(), vec.begin(), vec.end());
}

std::span<const float> EmbeddingStore::vector(const std::string& id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw LookupError("embedding", id);
    return row(it->second);
}

void EmbeddingStore::save(const std::filesystem::path& vec_path, const std::filesystem::path& id_path) const {
    io::write_atomically(vec_path, [&](std::ostream& out) {
        io::write_magic(out, kEmbMagic);
        io::write_u32(out, static_cast<std::uint32_t>(ids_.size()));
        io::write_u32(out, static_cast<std::uint32_t>(dim_));
        for (float v : data_) io::write_f32(out, v);
    });
    io::write_atomically(id_path, [&](std::ostream& out) {
        for (const auto& id : ids_) out << id << '\n';
    });
}

EmbeddingStore load_embeddings(const std::filesystem::path& vec_path, const std::filesystem::path& id_path) {
    std::ifstream ids_in(id_path);
    if (!ids_in) throw Error("cannot open '" + id_path.string() + "'");
    std::vector<std::string> ids;
    for (std::string line; std::getline(ids_in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ids.push_back(line);
    }

    std::ifstream in(vec_path, std::ios::binary);
    if (!in) throw Error("cannot open '" + vec_path.string() + "'");
    const std::string what = "embedding file '" + vec_path.string() + "'";
    io::expect_magic(in, kEmbMagic, what);
    const auto count = io::read_u32(in);
    const auto dim = io::read_u32(in);
    if (dim == 0) throw ParseError(what + ": dimension must be positive");
    if (count != ids.size()) {
        throw ParseError(what + " holds " + std::to_string(count) + " rows but '" + id_path.string() + "' lists " +
                         std::to_string(ids.size()) + " ids");
    }
    EmbeddingStore store(dim);
    std::vector<float> row(dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        for (std::uint32_t k = 0; k < dim; ++k) {
            row[k] = io::read_f32(in);
            if (!std::isfinite(row[k])) {
                throw ParseError(what + ": non-finite value in row " + std::to_string(r) + " ('" + ids[r] + "')");
            }
        }
        store.add(ids[r], row);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(what + ": trailing bytes");
    return store;
}

EmbeddingStore load_text_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    EmbeddingStore store;
    bool first = true;
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        std::istringstream ss(line);
        std::string id;
        if (!(ss >> id)) continue;
        std::vector<float> v;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stof(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(path.string(), lineno, "not a number: '" + tok + "'");
            }
        }
        if (first) {
            if (v.empty()) throw ParseError(path.string(), lineno, "row has no values");
            store = EmbeddingStore(v.size());
            first = false;
        }
        try {
            store.add(id, v);
        } catch (const Error& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return store;
}

double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    return s;
}

double dense_score(const EmbeddingStore& store, const std::string& id_a, const std::string& id_b) {
    return dot(store.vector(id_a), store.vector(id_b));
}

}  // namespace hybrank
