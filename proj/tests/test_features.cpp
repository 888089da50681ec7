#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hybrank/error.hpp"
#include "hybrank/features.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hybrank;
using hybrank::testing::TempDir;

namespace {

// softmax(x / t) followed by min-max to [-1, 1], written out longhand.
std::vector<double> normalize_by_hand(const std::vector<double>& x, double t) {
    std::vector<double> e;
    double sum = 0.0;
    for (double v : x) {
        e.push_back(std::exp(v / t));
        sum += e.back();
    }
    for (double& v : e) v /= sum;
    const double lo = *std::min_element(e.begin(), e.end());
    const double hi = *std::max_element(e.begin(), e.end());
    std::vector<double> z;
    for (double v : e) z.push_back(hi == lo ? 0.0 : 2.0 * (v - lo) / (hi - lo) - 1.0);
    return z;
}

struct Toy {
    std::vector<std::string> texts{"red apple pie",      "green apple tart", "red car fast",
                                   "blue car slow",      "apple orchard red", "fast blue boat"};
    std::vector<std::string> ids{"p1", "p2", "p3", "p4", "p5", "p6"};
    Corpus corpus;
    TermIndex index;
    EmbeddingStore store{4};
    std::vector<std::vector<float>> vecs;

    Toy() {
        std::vector<Document> docs;
        for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({ids[i], "", texts[i]});
        corpus = Corpus(docs);
        index = TermIndex::build(corpus, {});
        std::mt19937 gen(1);
        std::normal_distribution<float> nd;
        for (std::size_t i = 0; i <= ids.size(); ++i) {
            std::vector<float> v(4);
            for (auto& x : v) x = nd(gen);
            vecs.push_back(v);
            store.add(i < ids.size() ? ids[i] : query_key("q1"), v);
        }
    }
    std::size_t pos(const std::string& id) const {
        return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    }
};

}  // namespace

TEST_CASE("select_anchors top") {
    std::vector<std::string> list;
    for (int i = 1; i <= 100; ++i) list.push_back("d" + std::to_string(i));
    CHECK(select_anchors(list, 100, AnchorStrategy::top).ids == list);
    const std::vector<std::string> five{"d1", "d2", "d3", "d4", "d5"};
    CHECK(select_anchors(five, 2, AnchorStrategy::top).ids == std::vector<std::string>{"d1", "d2"});
    CHECK_THROWS_AS(select_anchors(five, 6, AnchorStrategy::top), Error);
    CHECK_THROWS_AS(select_anchors(five, 0, AnchorStrategy::top), Error);
}

TEST_CASE("select_anchors random is seeded") {
    std::vector<std::string> corpus_ids;
    for (int i = 0; i < 50; ++i) corpus_ids.push_back("c" + std::to_string(i));
    const auto a = select_anchors({}, 10, AnchorStrategy::random, 42, corpus_ids);
    const auto b = select_anchors({}, 10, AnchorStrategy::random, 42, corpus_ids);
    const auto c = select_anchors({}, 10, AnchorStrategy::random, 43, corpus_ids);
    CHECK(a == b);
    CHECK(a != c);
    auto sorted = a.ids;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK_THROWS_AS(select_anchors({}, 51, AnchorStrategy::random, 1, corpus_ids), Error);
}

TEST_CASE("raw similarities match per-cell recomputation") {
    Toy toy;
    const QueryInput q{"q1", "red apple"};
    const std::vector<std::string> passages{"p3", "p1", "p5", "p2", "p4"};
    const AnchorSet anchors{{"p3", "p1", "p6"}};
    const auto t = raw_similarities(q, passages, anchors, &toy.index, &toy.store, FeatureMode::hybrid);
    const oracle::Bm25 ref(toy.texts, 0.9, 0.4);
    REQUIRE(t.rows() == 6);
    REQUIRE(t.cols() == 3);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const std::string text = i == 0 ? q.text : toy.texts[toy.pos(passages[i - 1])];
        const auto& vec = i == 0 ? toy.vecs.back() : toy.vecs[toy.pos(passages[i - 1])];
        for (std::size_t j = 0; j < t.cols(); ++j) {
            const std::size_t a = toy.pos(anchors.ids[j]);
            CHECK(t.at(i, j, kSparse) == doctest::Approx(ref.score(text, a)).epsilon(1e-12));
            CHECK(t.at(i, j, kDense) == doctest::Approx(oracle::inner_product(vec, toy.vecs[a])).epsilon(1e-12));
        }
    }
}

TEST_CASE("query equal to an anchor holds its self score and squared norm") {
    Toy toy;
    EmbeddingStore store(4);
    for (std::size_t i = 0; i < toy.ids.size(); ++i) store.add(toy.ids[i], toy.vecs[i]);
    store.add(query_key("qa"), toy.vecs[0]);
    const QueryInput q{"qa", toy.texts[0]};
    const std::vector<std::string> passages{"p1", "p2"};
    const auto t = raw_similarities(q, passages, {{"p1"}}, &toy.index, &store, FeatureMode::hybrid);
    const std::vector<std::string> self_terms = tokenize(toy.texts[0]);
    CHECK(t.at(0, 0, kSparse) == bm25_score(toy.index, self_terms, "p1", {}));
    CHECK(t.at(0, 0, kDense) == doctest::Approx(oracle::inner_product(toy.vecs[0], toy.vecs[0])).epsilon(1e-12));
}

TEST_CASE("mode flags the unused channel") {
    Toy toy;
    const std::vector<std::string> passages{"p1", "p2"};
    const auto s = raw_similarities({"q1", "red"}, passages, {{"p1", "p2"}}, &toy.index, nullptr, FeatureMode::sparse);
    CHECK(s.channel_active[kSparse]);
    CHECK_FALSE(s.channel_active[kDense]);
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j) CHECK(s.at(i, j, kDense) == 0.0);
    const auto d = raw_similarities({"q1", "red"}, passages, {{"p1", "p2"}}, nullptr, &toy.store, FeatureMode::dense);
    CHECK_FALSE(d.channel_active[kSparse]);
    CHECK(d.channel_active[kDense]);
    CHECK_THROWS_AS(raw_similarities({"q1", "red"}, passages, {{"p1"}}, nullptr, &toy.store, FeatureMode::hybrid), Error);
    CHECK_THROWS_AS(raw_similarities({"q1", "red"}, std::vector<std::string>{"nope"}, {{"p1"}}, &toy.index, &toy.store,
                                     FeatureMode::hybrid),
                    LookupError);
}

TEST_CASE("normalize_channel contract") {
    const std::vector<double> x{1, 2, 3};
    for (double t : {0.5, 1.0, 10.0, 100.0}) {
        const auto z = normalize_channel(x, t);
        CHECK(z[0] == -1.0);
        CHECK(z[2] == 1.0);
        CHECK(z[1] > -1.0);
        CHECK(z[1] < 1.0);
        const auto shifted = normalize_channel(std::vector<double>{8.3, 9.3, 10.3}, t);
        for (int k = 0; k < 3; ++k) CHECK(shifted[k] == doctest::Approx(z[k]).epsilon(1e-12));
        const auto hand = normalize_by_hand(x, t);
        for (int k = 0; k < 3; ++k) CHECK(z[k] == doctest::Approx(hand[k]).epsilon(1e-12));
    }
    CHECK(normalize_channel(std::vector<double>{4, 4, 4}, 1.0) == std::vector<double>{0, 0, 0});
    CHECK(normalize_channel(std::vector<double>{7}, 1.0) == std::vector<double>{0});
    CHECK_THROWS_AS(normalize_channel(std::vector<double>{1, 2}, 0.0), Error);
    CHECK_THROWS_AS(normalize_channel(std::vector<double>{1, NAN}, 1.0), Error);
}

TEST_CASE("hybrid 3x2x2 tensor by hand") {
    SimTensor raw(3, 2);
    const double vals[3][2][2] = {{{3.0, 0.5}, {1.0, 0.7}}, {{0.0, 2.0}, {4.0, -1.0}}, {{2.0, 2.0}, {2.0, 2.0}}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            for (int c = 0; c < 2; ++c) raw.at(i, j, c) = vals[i][j][c];
    const auto out = build_features(raw, {});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            const auto hand = normalize_by_hand({vals[i][0][c], vals[i][1][c]}, c == 0 ? 100.0 : 10.0);
            for (std::size_t j = 0; j < 2; ++j) CHECK(out.at(i, j, c) == doctest::Approx(hand[j]).epsilon(1e-12));
        }
    }
    CHECK(out.at(0, 0, 0) == 1.0);
    CHECK(out.at(0, 1, 1) == 1.0);
    CHECK(out.at(2, 0, 0) == 0.0);
}

TEST_CASE("scaling a raw row changes its normalized values") {
    SimTensor raw(2, 3);
    const double row[3] = {1.0, 2.0, 3.0};
    for (std::size_t j = 0; j < 3; ++j) {
        raw.at(0, j, kSparse) = row[j];
        raw.at(1, j, kSparse) = 2.0 * row[j];
    }
    const NormConfig cfg{1.0, 1.0};
    const auto out = build_features(raw, cfg);
    const auto a = normalize_by_hand({1, 2, 3}, 1.0);
    const auto b = normalize_by_hand({2, 4, 6}, 1.0);
    CHECK(out.at(0, 1, kSparse) == doctest::Approx(a[1]).epsilon(1e-12));
    CHECK(out.at(1, 1, kSparse) == doctest::Approx(b[1]).epsilon(1e-12));
    CHECK(std::abs(out.at(0, 1, kSparse) - out.at(1, 1, kSparse)) > 1e-3);
}

TEST_CASE("build_features keeps range and argmax") {
    std::mt19937 gen(9);
    std::uniform_real_distribution<double> u(-5, 30);
    SimTensor raw(5, 7);
    for (double& v : raw.values()) v = u(gen);
    const auto out = build_features(raw, {});
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            std::size_t arg_raw = 0, arg_out = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(out.at(i, j, c) >= -1.0);
                CHECK(out.at(i, j, c) <= 1.0);
                if (raw.at(i, j, c) > raw.at(i, arg_raw, c)) arg_raw = j;
                if (out.at(i, j, c) > out.at(i, arg_out, c)) arg_out = j;
            }
            CHECK(arg_raw == arg_out);
        }
    }
}

TEST_CASE("inactive channel stays zero after normalization") {
    SimTensor raw(2, 3);
    for (double& v : raw.values()) v = 1.5;
    raw.at(0, 0, kSparse) = 4.0;
    raw.channel_active = {true, false};
    const auto out = build_features(raw, {});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j, kDense) == 0.0);
    CHECK(out.at(0, 0, kSparse) == 1.0);
}

TEST_CASE("query-only layout normalizes down the passage axis") {
    Toy toy;
    const std::vector<std::string> passages{"p1", "p3", "p4"};
    const QueryInput q{"q1", "red apple"};
    const auto raw = raw_query_similarities(q, passages, &toy.index, &toy.store, FeatureMode::hybrid);
    CHECK(raw.rows() == 4);
    CHECK(raw.cols() == 1);
    CHECK_FALSE(raw.query_row_active);
    CHECK(raw.at(0, 0, kSparse) == 0.0);
    const auto out = build_features(raw, {});
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> column;
        for (std::size_t i = 1; i < 4; ++i) column.push_back(raw.at(i, 0, c));
        const auto hand = normalize_by_hand(column, c == 0 ? 100.0 : 10.0);
        CHECK(out.at(0, 0, c) == 0.0);
        for (std::size_t i = 1; i < 4; ++i) CHECK(out.at(i, 0, c) == doctest::Approx(hand[i - 1]).epsilon(1e-12));
    }
}

TEST_CASE("run features and cache round-trip") {
    Toy toy;
    Run run;
    run["q1"] = {{"p1", 3}, {"p5", 2}, {"p3", 1}};
    QuerySet queries{{"q1", "red apple"}};
    FeatureOptions opts;
    auto feats = build_run_features(run, queries, &toy.index, &toy.store, opts);
    REQUIRE(feats.size() == 1);
    CHECK(feats[0].anchors.ids == std::vector<std::string>{"p1", "p5", "p3"});
    CHECK(feats[0].tensor.rows() == 4);

    opts.anchors = 4;
    CHECK_THROWS_AS(build_run_features(run, queries, &toy.index, &toy.store, opts), Error);
    opts.anchors = 2;
    opts.strategy = AnchorStrategy::random;
    const auto r1 = build_run_features(run, queries, &toy.index, &toy.store, opts, toy.ids);
    const auto r2 = build_run_features(run, queries, &toy.index, &toy.store, opts, toy.ids);
    CHECK(r1 == r2);
    CHECK(r1[0].tensor.cols() == 2);

    CHECK_THROWS_AS(build_run_features(run, QuerySet{}, &toy.index, &toy.store, FeatureOptions{}), LookupError);

    TempDir dir;
    FeatureCacheKey key;
    key.run_hash = "abc";
    FeatureCache::write(dir / "cache", key, feats);
    CHECK(FeatureCache::stored_digest(dir / "cache") == key.digest());
    const auto back = FeatureCache::read(dir / "cache");
    REQUIRE(back.size() == 1);
    CHECK(back[0].qid == "q1");
    CHECK(back[0].passage_ids == feats[0].passage_ids);
    for (std::size_t k = 0; k < back[0].tensor.values().size(); ++k) {
        CHECK(back[0].tensor.values()[k] == static_cast<double>(static_cast<float>(feats[0].tensor.values()[k])));
    }
    // A reloaded cache re-saves to identical bytes.
    save_features(back[0], dir / "again.fea");
    save_features(load_features(dir / "again.fea"), dir / "again2.fea");
    CHECK(hybrank::testing::slurp(dir / "again.fea") == hybrank::testing::slurp(dir / "again2.fea"));
    CHECK(load_features(dir / "again.fea") == back[0]);
    FeatureCacheKey other = key;
    other.mode = FeatureMode::sparse;
    CHECK(other.digest() != key.digest());
}
