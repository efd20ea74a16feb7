#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "lol/io.hpp"

using namespace lol;

namespace {

struct TempDir {
  std::filesystem::path dir;
  TempDir() {
    dir = std::filesystem::temp_directory_path() /
          ("lol_io_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream f(path(name));
    f << content;
    return path(name);
  }
  std::string slurp(const std::string& name) const {
    std::ifstream f(path(name));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }
};

}  // namespace

TEST_CASE("tokenizer lowercases and assigns stable ids") {
  Tokenizer t;
  auto s1 = t.encode("Deep Learning for deep retrieval");
  CHECK(s1.size() == 5);
  CHECK(s1[0] == s1[3]);  // "deep" == "deep"
  CHECK(t.word(s1[0]) == "deep");
  auto s2 = t.encode("DEEP");
  CHECK(s2[0] == s1[0]);
  CHECK(t.vocab_size() == 4);
}

TEST_CASE("read_corpus parses TSV and rejects malformed lines") {
  TempDir td;
  Tokenizer tok;
  auto p = td.write("c.tsv", "d1\thello world\nd2\tsecond doc\n\nd3\tthird\n");
  auto docs = read_corpus(p, tok);
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].doc_id == "d1");
  CHECK(docs[0].text.size() == 2);
  CHECK(docs[2].doc_id == "d3");

  auto bad = td.write("bad.tsv", "d1\tok\nno tab here\n");
  CHECK_THROWS_WITH(read_corpus(bad, tok), Catch::Matchers::ContainsSubstring("bad.tsv:2"));

  auto dup = td.write("dup.tsv", "d1\ta\nd1\tb\n");
  CHECK_THROWS_WITH(read_corpus(dup, tok), Catch::Matchers::ContainsSubstring("duplicate doc_id"));

  auto empty = td.write("empty.tsv", "");
  CHECK(read_corpus(empty, tok).empty());

  CHECK_THROWS_AS(read_corpus(td.path("missing.tsv"), tok), io_error);
}

TEST_CASE("read_queries mirrors corpus parsing") {
  TempDir td;
  Tokenizer tok;
  auto p = td.write("q.tsv", "q1\twhat is prf\nq2\tquery two\n");
  auto qs = read_queries(p, tok);
  REQUIRE(qs.size() == 2);
  CHECK(qs[1].query_id == "q2");
  auto dup = td.write("qd.tsv", "q1\ta\nq1\tb\n");
  CHECK_THROWS_WITH(read_queries(dup, tok),
                    Catch::Matchers::ContainsSubstring("duplicate query_id"));
}

TEST_CASE("read_qrels hand case and error lines") {
  TempDir td;
  auto p = td.write("qrels.txt", "q1 0 d1 2\nq1 0 d2 0\nq2 0 d1 1\n");
  auto j = read_qrels(p);
  CHECK(j.grade("q1", "d1") == 2);
  CHECK(j.grade("q1", "d2") == 0);
  CHECK(j.grade("q2", "d1") == 1);
  CHECK(j.grade("q9", "d1") == 0);  // absent means zero

  auto bad = td.write("bad.txt", "q1 0 d1 2\nq1 0 d2\n");
  CHECK_THROWS_WITH(read_qrels(bad), Catch::Matchers::ContainsSubstring("bad.txt:2"));

  auto neg = td.write("neg.txt", "q1 0 d1 -1\n");
  CHECK_THROWS_WITH(read_qrels(neg), Catch::Matchers::ContainsSubstring("negative grade"));

  auto garbled = td.write("garbled.txt", "q1 0 d1 two\n");
  CHECK_THROWS_WITH(read_qrels(garbled), Catch::Matchers::ContainsSubstring("grade"));

  auto trailing = td.write("trail.txt", "q1 0 d1 2 extra\n");
  CHECK_THROWS_WITH(read_qrels(trailing), Catch::Matchers::ContainsSubstring("trailing"));
}

TEST_CASE("read_run hand case and field diagnostics") {
  TempDir td;
  auto p = td.write("run.txt",
                    "q1 Q0 d3 1 9.500000 sys\n"
                    "q1 Q0 d1 2 7.250000 sys\n"
                    "q2 Q0 d2 1 1.000000 sys\n");
  auto runs = read_run(p);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].query_id == "q1");
  CHECK(runs[0].entries.size() == 2);
  CHECK(runs[0].entries[0].doc_id == "d3");
  CHECK(runs[0].entries[0].score == 9.5);
  CHECK(runs[0].produced_by == "sys");
  CHECK(runs[1].entries[0].doc_id == "d2");

  // rank and score swapped: the score slot holds "1" (fine) but the rank slot
  // holds "9.500000", which must be reported as a malformed rank field
  auto swapped = td.write("swap.txt", "q1 Q0 d3 9.500000 1 sys\n");
  CHECK_THROWS_WITH(read_run(swapped), Catch::Matchers::ContainsSubstring("rank"));

  auto gap = td.write("gap.txt", "q1 Q0 d1 1 2.0 sys\nq1 Q0 d2 3 1.0 sys\n");
  CHECK_THROWS_WITH(read_run(gap), Catch::Matchers::ContainsSubstring("out of sequence"));

  auto dup = td.write("dup.txt", "q1 Q0 d1 1 2.0 sys\nq1 Q0 d1 2 1.0 sys\n");
  CHECK_THROWS_WITH(read_run(dup), Catch::Matchers::ContainsSubstring("duplicate doc_id"));

  auto noq0 = td.write("noq0.txt", "q1 XX d1 1 2.0 sys\n");
  CHECK_THROWS_WITH(read_run(noq0), Catch::Matchers::ContainsSubstring("Q0"));

  CHECK(read_run(td.write("e.txt", "")).empty());
}

TEST_CASE("write_run formatting and round trip") {
  TempDir td;
  std::vector<RankedList> runs;
  runs.push_back({"q1", {{"d2", 1.23456789}, {"d1", 0.5}}, "x"});
  runs.push_back({"q2", {{"d9", -2.0}}, "x"});
  write_run(runs, "mytag", td.path("out.txt"));
  CHECK(td.slurp("out.txt") ==
        "q1 Q0 d2 1 1.234568 mytag\n"
        "q1 Q0 d1 2 0.500000 mytag\n"
        "q2 Q0 d9 1 -2.000000 mytag\n");
  auto back = read_run(td.path("out.txt"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].entries[0].doc_id == "d2");
  CHECK(back[0].entries[1].score == 0.5);
  CHECK(back[1].produced_by == "mytag");
}

TEST_CASE("vectors round trip preserves values exactly") {
  TempDir td;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;

  SECTION("dense") {
    std::vector<std::string> ids;
    std::vector<VectorRepr> vecs;
    for (int i = 0; i < 7; ++i) {
      ids.push_back("d" + std::to_string(i));
      Eigen::VectorXd v(5);
      for (int j = 0; j < 5; ++j) v[j] = g(rng);
      vecs.push_back(VectorRepr::make_dense(v));
    }
    write_vectors(ids, vecs, td.path("v.txt"));
    auto [rids, rvecs] = read_vectors(td.path("v.txt"));
    REQUIRE(rids == ids);
    for (size_t i = 0; i < vecs.size(); ++i) CHECK(rvecs[i] == vecs[i]);
  }

  SECTION("sparse") {
    std::vector<std::string> ids;
    std::vector<VectorRepr> vecs;
    for (int i = 0; i < 7; ++i) {
      ids.push_back("s" + std::to_string(i));
      std::map<int, double> e;
      for (int j = 0; j < 4; ++j) e[static_cast<int>(rng() % 50)] = std::abs(g(rng)) + 0.01;
      vecs.push_back(VectorRepr::make_sparse(50, std::move(e)));
    }
    write_vectors(ids, vecs, td.path("v.txt"));
    auto [rids, rvecs] = read_vectors(td.path("v.txt"));
    REQUIRE(rids == ids);
    for (size_t i = 0; i < vecs.size(); ++i) CHECK(rvecs[i] == vecs[i]);
  }

  SECTION("count mismatch and malformed header are rejected") {
    td.write("short.txt", "vectors dense 2 3\na 1 2\n");
    CHECK_THROWS_WITH(read_vectors(td.path("short.txt")),
                      Catch::Matchers::ContainsSubstring("declares 3"));
    td.write("hdr.txt", "vector dense 2 1\na 1 2\n");
    CHECK_THROWS_AS(read_vectors(td.path("hdr.txt")), io_error);
  }
}

TEST_CASE("checkpoint save-load-save is byte identical") {
  TempDir td;
  ModelConfig mc;
  mc.vec_dim = 6;
  mc.width = 8;
  auto params = init_params(mc, 42);
  save_checkpoint(params, td.path("a.ckpt"));
  auto loaded = load_checkpoint(td.path("a.ckpt"));
  CHECK(loaded.config == params.config);
  REQUIRE(loaded.tensors.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors) CHECK(loaded.at(name) == t);
  save_checkpoint(loaded, td.path("b.ckpt"));
  CHECK(td.slurp("a.ckpt") == td.slurp("b.ckpt"));
}

TEST_CASE("checkpoint corruption diagnostics") {
  TempDir td;
  ModelConfig mc;
  mc.vec_dim = 4;
  mc.width = 8;
  auto params = init_params(mc, 1);
  save_checkpoint(params, td.path("good.ckpt"));

  // truncated: drop the trailing end marker and some data
  auto full = td.slurp("good.ckpt");
  td.write("trunc.ckpt", full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(td.path("trunc.ckpt")), io_error);

  // version mismatch names both versions
  std::string bumped = full;
  bumped.replace(bumped.find("lolckpt 1"), 9, "lolckpt 7");
  td.write("v7.ckpt", bumped);
  CHECK_THROWS_WITH(load_checkpoint(td.path("v7.ckpt")),
                    Catch::Matchers::ContainsSubstring("version 7") &&
                        Catch::Matchers::ContainsSubstring("expected 1"));

  td.write("junk.ckpt", "not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(td.path("junk.ckpt")), io_error);
}

TEST_CASE("config files round trip with schema guard") {
  TempDir td;
  std::map<std::string, std::string> kv{{"lambda", "1.0"}, {"seed", "7"}, {"variant", "standard"}};
  write_config(kv, td.path("c.cfg"));
  auto back = read_config(td.path("c.cfg"));
  CHECK(back.at("schema_version") == "1");
  for (const auto& [k, v] : kv) CHECK(back.at(k) == v);

  td.write("nover.cfg", "lambda=1.0\n");
  CHECK_THROWS_WITH(read_config(td.path("nover.cfg")),
                    Catch::Matchers::ContainsSubstring("schema_version"));

  td.write("badver.cfg", "schema_version=9\n");
  CHECK_THROWS_WITH(read_config(td.path("badver.cfg")),
                    Catch::Matchers::ContainsSubstring("9") &&
                        Catch::Matchers::ContainsSubstring("expected 1"));

  td.write("noeq.cfg", "schema_version=1\njust a line\n");
  CHECK_THROWS_WITH(read_config(td.path("noeq.cfg")),
                    Catch::Matchers::ContainsSubstring("noeq.cfg:2"));

  // comments and blanks tolerated
  td.write("cmt.cfg", "schema_version=1\n# comment\n\nkey=value\n");
  CHECK(read_config(td.path("cmt.cfg")).at("key") == "value");
}

TEST_CASE("qrels and run round trip through files") {
  TempDir td;
  std::mt19937_64 rng(21);
  // random qrels
  RelevanceJudgments j;
  std::ostringstream qr;
  for (int q = 0; q < 5; ++q)
    for (int d = 0; d < 10; ++d)
      if (rng() % 2) {
        const int grade = static_cast<int>(rng() % 4);
        j.set("q" + std::to_string(q), "d" + std::to_string(d), grade);
        qr << "q" << q << " 0 d" << d << ' ' << grade << '\n';
      }
  td.write("r.qrels", qr.str());
  auto back = read_qrels(td.path("r.qrels"));
  CHECK(back.all() == j.all());
}
