#include <doctest.h>

#include "hybrank/corpus_io.hpp"
#include "hybrank/error.hpp"
#include "test_util.hpp"

using namespace hybrank;
using hybrank::testing::TempDir;

TEST_CASE("load_corpus keeps file order") {
    TempDir dir;
    const auto p = dir.write("c.jsonl",
                             R"({"id":"d1","text":"alpha"})"
                             "\n"
                             R"({"id":"d2","title":"T","text":"beta"})"
                             "\n"
                             R"({"id":"d3","text":"gamma"})"
                             "\n");
    const Corpus c = load_corpus(p);
    REQUIRE(c.size() == 3);
    CHECK(c[0].id == "d1");
    CHECK(c[1].id == "d2");
    CHECK(c[1].title == "T");
    CHECK(c[2].text == "gamma");
    CHECK(c.at("d2").text == "beta");
    CHECK_THROWS_AS(c.at("nope"), LookupError);
}

TEST_CASE("load_corpus on an empty file") {
    TempDir dir;
    CHECK(load_corpus(dir.write("e.jsonl", "")).empty());
}

TEST_CASE("duplicate document id names the id and the line") {
    TempDir dir;
    const auto p = dir.write("c.jsonl",
                             "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d2\",\"text\":\"b\"}\n"
                             "{\"id\":\"d3\",\"text\":\"c\"}\n{\"id\":\"d1\",\"text\":\"d\"}\n");
    try {
        load_corpus(p);
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find("'d1'") != std::string::npos);
    }
}

TEST_CASE("malformed corpus line") {
    TempDir dir;
    CHECK_THROWS_AS(load_corpus(dir.write("c.jsonl", "{\"id\":\"d1\"\n")), ParseError);
    CHECK_THROWS_AS(load_corpus(dir.write("d.jsonl", "{\"id\":\"d1\"}\n")), ParseError);
    CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl"), Error);
}

TEST_CASE("load_run sorts by descending score") {
    TempDir dir;
    const Run run = load_run(dir.write("r.trec", "q1 Q0 dA 1 2.0 t\nq1 Q0 dB 2 5.0 t\n"), 100);
    REQUIRE(run.at("q1").size() == 2);
    CHECK(run.at("q1")[0] == ScoredDoc{"dB", 5.0});
    CHECK(run.at("q1")[1] == ScoredDoc{"dA", 2.0});
}

TEST_CASE("load_run truncates to max_depth keeping the best") {
    TempDir dir;
    std::string text;
    for (int i = 0; i < 150; ++i) text += "q1 Q0 d" + std::to_string(i) + " 1 " + std::to_string(i) + " t\n";
    const Run run = load_run(dir.write("r.trec", text), 100);
    const auto& list = run.at("q1");
    REQUIRE(list.size() == 100);
    CHECK(list.front().doc_id == "d149");
    CHECK(list.back().doc_id == "d50");
}

TEST_CASE("load_run ties keep file order") {
    TempDir dir;
    const Run run = load_run(dir.write("r.trec", "q1 Q0 x 1 1 t\nq1 Q0 y 2 1 t\nq1 Q0 z 3 1 t\n"), 10);
    CHECK(run.at("q1")[0].doc_id == "x");
    CHECK(run.at("q1")[2].doc_id == "z");
}

TEST_CASE("load_run rejects bad lines") {
    TempDir dir;
    try {
        load_run(dir.write("r.trec", "q1 Q0 d1 1 1.0 t\nq1 Q0 d7 1 abc tag\n"), 10);
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(load_run(dir.write("s.trec", "q1 Q0 d1 1\n"), 10), ParseError);
    CHECK_THROWS_AS(load_run(dir.write("u.trec", "q1 Q0 d1 1 1 t\nq1 Q0 d1 2 0.5 t\n"), 10), ParseError);
}

TEST_CASE("load_qrels grades") {
    TempDir dir;
    const Qrels q = load_qrels(dir.write("q.txt", "q1 0 d3 1\nq1 0 d4 0\n"));
    CHECK(q.at("q1").at("d3") == 1);
    CHECK(is_positive(q.at("q1").at("d3")));
    CHECK(q.at("q1").at("d4") == 0);
    CHECK_FALSE(is_positive(q.at("q1").at("d4")));
    CHECK_THROWS_AS(load_qrels(dir.write("n.txt", "q1 0 d3 -1\n")), ParseError);
}

TEST_CASE("duplicate qrels overwrite with a warning") {
    TempDir dir;
    std::vector<std::string> warnings;
    const Qrels q = load_qrels(dir.write("q.txt", "q1 0 d3 1\nq1 0 d3 2\n"), &warnings);
    CHECK(q.at("q1").at("d3") == 2);
    CHECK(warnings.size() == 1);
}

TEST_CASE("load_queries accepts plain and JSON lines") {
    TempDir dir;
    const QuerySet a = load_queries(dir.write("a.tsv", "q1\twho wrote it\nq2 what is bm25\n"));
    CHECK(a.at("q1") == "who wrote it");
    CHECK(a.at("q2") == "what is bm25");
    const QuerySet b = load_queries(dir.write("b.jsonl", "{\"id\":\"q9\",\"text\":\"hello world\"}\n"));
    CHECK(b.at("q9") == "hello world");
}

TEST_CASE("write_run format") {
    TempDir dir;
    Run run;
    run["q1"] = {{"d2", 0.9}, {"d5", 0.3}};
    write_run(run, dir / "out.trec", "tag");
    CHECK(hybrank::testing::slurp(dir / "out.trec") == "q1 Q0 d2 1 0.9 tag\nq1 Q0 d5 2 0.3 tag\n");
}

TEST_CASE("write_run of an empty run") {
    TempDir dir;
    write_run(Run{}, dir / "out.trec", "tag");
    CHECK(std::filesystem::exists(dir / "out.trec"));
    CHECK(hybrank::testing::slurp(dir / "out.trec").empty());
}

TEST_CASE("write_run then load_run round-trips") {
    TempDir dir;
    Run run;
    run["q1"] = {{"a", 3.5}, {"b", 1.25}, {"c", -0.5}};
    run["q2"] = {{"z", 100}, {"y", 0.001}};
    write_run(run, dir / "r.trec", "x");
    CHECK(load_run(dir / "r.trec", 1000) == run);
}
