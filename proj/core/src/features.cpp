#include "hybrank/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "hybrank/binary_io.hpp"
#include "hybrank/error.hpp"
#include "hybrank/random.hpp"

namespace hybrank {

namespace {

constexpr io::Magic kFeatureMagic = io::make_magic("HYBFEA1");

void normalize_active_channel(const SimTensor& raw, std::size_t c, double t, std::vector<double>& buf, SimTensor& out,
                  bool by_row) {
    if (!raw.channel_active[c]) return;
    if (by_row) {
        for (std::size_t i = 0; i < raw.rows(); ++i) {
            if (i == 0 && !raw.query_row_active) continue;
            buf.resize(raw.cols());
            for (std::size_t j = 0; j < raw.cols(); ++j) buf[j] = raw.at(i, j, c);
            const auto z = normalize_channel(buf, t);
            for (std::size_t j = 0; j < raw.cols(); ++j) out.at(i, j, c) = z[j];
        }
    } else {
        const std::size_t first = raw.query_row_active ? 0 : 1;
        for (std::size_t j = 0; j < raw.cols(); ++j) {
            buf.clear();
            for (std::size_t i = first; i < raw.rows(); ++i) buf.push_back(raw.at(i, j, c));
            if (buf.empty()) continue;
            const auto z = normalize_channel(buf, t);
            for (std::size_t i = first; i < raw.rows(); ++i) out.at(i, j, c) = z[i - first];
        }
    }
}

}  // namespace

std::string to_string(FeatureMode m) {
    switch (m) {
        case FeatureMode::sparse: return "sparse";
        case FeatureMode::dense: return "dense";
        case FeatureMode::hybrid: return "hybrid";
    }
    return "hybrid";
}

std::string to_string(AnchorStrategy s) { return s == AnchorStrategy::top ? "top" : "random"; }

FeatureMode parse_feature_mode(const std::string& s) {
    if (s == "sparse") return FeatureMode::sparse;
    if (s == "dense") return FeatureMode::dense;
    if (s == "hybrid") return FeatureMode::hybrid;
    throw Error("unknown feature mode '" + s + "' (expected sparse, dense or hybrid)");
}

AnchorStrategy parse_anchor_strategy(const std::string& s) {
    if (s == "top") return AnchorStrategy::top;
    if (s == "random") return AnchorStrategy::random;
    throw Error("unknown anchor strategy '" + s + "' (expected top or random)");
}

void NormConfig::validate() const {
    if (!(t_sparse > 0.0) || !(t_dense > 0.0)) throw Error("normalization temperatures must be positive");
}

SimTensor::SimTensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols * 2, 0.0) {
    if (rows < 1 || cols < 1) throw ShapeError("SimTensor needs at least one row and one column");
}

AnchorSet select_anchors(std::span<const std::string> list, std::size_t L, AnchorStrategy strategy, std::uint64_t seed,
                         std::span<const std::string> corpus_ids) {
    if (L == 0) throw Error("anchor count must be positive");
    AnchorSet set;
    if (strategy == AnchorStrategy::top) {
        if (L > list.size()) {
            throw Error("requested " + std::to_string(L) + " anchors but the list holds only " +
                        std::to_string(list.size()) + " passages");
        }
        set.ids.assign(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(L));
        return set;
    }
    if (L > corpus_ids.size()) {
        throw Error("requested " + std::to_string(L) + " random anchors from a corpus of " +
                    std::to_string(corpus_ids.size()));
    }
    // Partial Fisher-Yates over an index permutation.
    Rng rng(seed);
    std::vector<std::size_t> perm(corpus_ids.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = 0; i < L; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, perm.size() - i));
        std::swap(perm[i], perm[j]);
        set.ids.push_back(corpus_ids[perm[i]]);
    }
    return set;
}

SimTensor raw_similarities(const QueryInput& query, std::span<const std::string> passages, const AnchorSet& anchors,
                           const TermIndex* index, const EmbeddingStore* store, FeatureMode mode) {
    const bool use_sparse = mode != FeatureMode::dense;
    const bool use_dense = mode != FeatureMode::sparse;
    if (use_sparse && index == nullptr) throw Error("sparse features requested without a term index");
    if (use_dense && store == nullptr) throw Error("dense features requested without an embedding store");
    if (anchors.ids.empty()) throw Error("anchor set is empty");

    const std::size_t rows = passages.size() + 1;
    const std::size_t cols = anchors.ids.size();
    SimTensor t(rows, cols);
    t.channel_active = {use_sparse, use_dense};

    if (use_sparse) {
        std::vector<std::size_t> anchor_docs(cols);
        for (std::size_t j = 0; j < cols; ++j) anchor_docs[j] = index->doc_index(anchors.ids[j]);
        const auto& params = index->params();
        for (std::size_t i = 0; i < rows; ++i) {
            const auto terms = i == 0 ? index->query_terms(query.text) : index->doc_as_query(index->doc_index(passages[i - 1]));
            for (std::size_t j = 0; j < cols; ++j) t.at(i, j, kSparse) = index->score(terms, anchor_docs[j], params);
        }
    }
    if (use_dense) {
        std::vector<std::span<const float>> anchor_vecs(cols);
        for (std::size_t j = 0; j < cols; ++j) anchor_vecs[j] = store->vector(anchors.ids[j]);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto v = store->vector(i == 0 ? query_key(query.id) : passages[i - 1]);
            for (std::size_t j = 0; j < cols; ++j) t.at(i, j, kDense) = dot(v, anchor_vecs[j]);
        }
    }
    return t;
}

SimTensor raw_query_similarities(const QueryInput& query, std::span<const std::string> passages,
                                 const TermIndex* index, const EmbeddingStore* store, FeatureMode mode) {
    const bool use_sparse = mode != FeatureMode::dense;
    const bool use_dense = mode != FeatureMode::sparse;
    if (use_sparse && index == nullptr) throw Error("sparse features requested without a term index");
    if (use_dense && store == nullptr) throw Error("dense features requested without an embedding store");

    SimTensor t(passages.size() + 1, 1);
    t.channel_active = {use_sparse, use_dense};
    t.query_row_active = false;
    t.layout = FeatureLayout::query_only;
    if (use_sparse) {
        const auto terms = index->query_terms(query.text);
        for (std::size_t i = 0; i < passages.size(); ++i) {
            t.at(i + 1, 0, kSparse) = index->score(terms, index->doc_index(passages[i]), index->params());
        }
    }
    if (use_dense) {
        const auto q = store->vector(query_key(query.id));
        for (std::size_t i = 0; i < passages.size(); ++i) t.at(i + 1, 0, kDense) = dot(q, store->vector(passages[i]));
    }
    return t;
}

std::vector<double> normalize_channel(std::span<const double> x, double t) {
    if (x.empty()) throw Error("normalize_channel: empty input");
    if (!(t > 0.0) || !std::isfinite(t)) throw Error("normalize_channel: temperature must be positive");
    for (double v : x) {
        if (!std::isfinite(v)) throw Error("normalize_channel: non-finite input");
    }
    // softmax(x/t) followed by min-max reduces to
    //   z_k = 2 (e^{a_k} - e^{a_min}) / (1 - e^{a_min}) - 1,  a = (x - max x) / t <= 0,
    // since the partition sum cancels. expm1 keeps the differences accurate
    // when the spread is small relative to t.
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double mx = *hi_it;
    const double em_lo = std::expm1((*lo_it - mx) / t);
    const double span = -em_lo;
    if (!(span > 0.0)) return std::vector<double>(x.size(), 0.0);
    std::vector<double> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = 2.0 * (std::expm1((x[k] - mx) / t) - em_lo) / span - 1.0;
    return z;
}

SimTensor build_features(const SimTensor& raw, const NormConfig& cfg) {
    cfg.validate();
    for (double v : raw.values()) {
        if (!std::isfinite(v)) throw Error("build_features: raw tensor holds a non-finite value");
    }
    SimTensor out = raw;
    std::fill(out.values().begin(), out.values().end(), 0.0);
    std::vector<double> buf;
    const bool by_row = raw.layout == FeatureLayout::collaborative;
    normalize_active_channel(raw, kSparse, cfg.t_sparse, buf, out, by_row);
    normalize_active_channel(raw, kDense, cfg.t_dense, buf, out, by_row);
    return out;
}

std::vector<QueryFeatures> build_run_features(const Run& run, const QuerySet& queries, const TermIndex* index,
                                              const EmbeddingStore* store, const FeatureOptions& opts,
                                              std::span<const std::string> corpus_ids) {
    opts.norm.validate();
    std::vector<QueryFeatures> out;
    out.reserve(run.size());
    for (const auto& [qid, list] : run) {
        auto q = queries.find(qid);
        if (q == queries.end()) throw LookupError("query", qid);
        QueryFeatures f;
        f.qid = qid;
        f.passage_ids.reserve(list.size());
        for (const auto& d : list) f.passage_ids.push_back(d.doc_id);
        const QueryInput input{qid, q->second};
        SimTensor raw;
        if (opts.query_only) {
            f.anchors.ids = {query_key(qid)};
            raw = raw_query_similarities(input, f.passage_ids, index, store, opts.mode);
        } else {
            const std::size_t L = opts.anchors == 0 ? f.passage_ids.size() : opts.anchors;
            f.anchors = select_anchors(f.passage_ids, L, opts.strategy, opts.seed ^ io::fnv1a64(qid), corpus_ids);
            raw = raw_similarities(input, f.passage_ids, f.anchors, index, store, opts.mode);
        }
        f.tensor = build_features(raw, opts.norm);
        out.push_back(std::move(f));
    }
    return out;
}

void save_features(const QueryFeatures& f, const std::filesystem::path& path) {
    const auto& t = f.tensor;
    if (f.passage_ids.size() + 1 != t.rows() || f.anchors.ids.size() != t.cols()) {
        throw ShapeError("feature tensor shape does not match its id lists");
    }
    io::write_atomically(path, [&](std::ostream& out) {
        io::write_magic(out, kFeatureMagic);
        io::write_u32(out, static_cast<std::uint32_t>(t.num_passages()));
        io::write_u32(out, static_cast<std::uint32_t>(t.cols()));
        io::write_u8(out, t.channel_active[kSparse] ? 1 : 0);
        io::write_u8(out, t.channel_active[kDense] ? 1 : 0);
        io::write_u8(out, t.query_row_active ? 1 : 0);
        io::write_u8(out, static_cast<std::uint8_t>(t.layout));
        for (double v : t.values()) io::write_f32(out, static_cast<float>(v));
        io::write_string(out, f.qid);
        for (const auto& id : f.passage_ids) io::write_string(out, id);
        for (const auto& id : f.anchors.ids) io::write_string(out, id);
    });
}

QueryFeatures load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    const std::string what = "feature file '" + path.string() + "'";
    io::expect_magic(in, kFeatureMagic, what);
    const auto n = io::read_u32(in);
    const auto l = io::read_u32(in);
    if (l == 0) throw ParseError(what + ": zero anchors");
    QueryFeatures f;
    f.tensor = SimTensor(n + 1, l);
    f.tensor.channel_active[kSparse] = io::read_u8(in) != 0;
    f.tensor.channel_active[kDense] = io::read_u8(in) != 0;
    f.tensor.query_row_active = io::read_u8(in) != 0;
    const auto layout = io::read_u8(in);
    if (layout > static_cast<std::uint8_t>(FeatureLayout::query_only)) throw ParseError(what + ": unknown layout");
    f.tensor.layout = static_cast<FeatureLayout>(layout);
    for (double& v : f.tensor.values()) v = io::read_f32(in);
    f.qid = io::read_string(in);
    f.passage_ids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) f.passage_ids.push_back(io::read_string(in));
    f.anchors.ids.reserve(l);
    for (std::uint32_t j = 0; j < l; ++j) f.anchors.ids.push_back(io::read_string(in));
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(what + ": trailing bytes");
    return f;
}

std::string FeatureCacheKey::digest() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "run=" << run_hash << ";strategy=" << to_string(strategy) << ";anchors=" << anchors << ";seed=" << seed
       << ";mode=" << to_string(mode) << ";t_sparse=" << norm.t_sparse << ";t_dense=" << norm.t_dense
       << ";query_only=" << query_only;
    return io::hex64(io::fnv1a64(ss.str()));
}

void FeatureCache::write(const std::filesystem::path& dir, const FeatureCacheKey& key,
                         const std::vector<QueryFeatures>& queries) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["key"] = key.digest();
    manifest["run_hash"] = key.run_hash;
    manifest["anchor_strategy"] = to_string(key.strategy);
    manifest["anchors"] = key.anchors;
    manifest["seed"] = key.seed;
    manifest["mode"] = to_string(key.mode);
    manifest["t_sparse"] = key.norm.t_sparse;
    manifest["t_dense"] = key.norm.t_dense;
    manifest["query_only"] = key.query_only;
    auto& list = manifest["queries"] = nlohmann::json::array();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "q%06zu.fea", i);
        save_features(queries[i], dir / name);
        list.push_back({{"qid", queries[i].qid}, {"file", name}});
    }
    io::write_atomically(dir / "manifest.json", [&](std::ostream& out) { out << manifest.dump(2) << '\n'; });
}

std::vector<QueryFeatures> FeatureCache::read(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed manifest '" + manifest_path.string() + "': " + e.what());
    }
    std::vector<QueryFeatures> out;
    for (const auto& entry : manifest.at("queries")) {
        auto f = load_features(dir / entry.at("file").get<std::string>());
        if (f.qid != entry.at("qid").get<std::string>()) {
            throw ParseError("feature file '" + entry.at("file").get<std::string>() + "' does not belong to query '" +
                             entry.at("qid").get<std::string>() + "'");
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::string FeatureCache::stored_digest(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) return {};
    try {
        return nlohmann::json::parse(io::read_file(manifest_path)).value("key", std::string{});
    } catch (const nlohmann::json::exception&) {
        return {};
    }
}

}  // namespace hybrank
