// Exercises the C interface exactly as an external consumer would.
#include "driftrank/driftrank.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path kToy = DRIFTRANK_TOY_DIR;

struct Owned {
    char* p = nullptr;
    ~Owned() { dr_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("driftrank-capi-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(CApi, VersionAndStatusNames) {
    EXPECT_STRNE(dr_version(), "");
    EXPECT_STREQ(dr_status_name(DR_OK), "ok");
    EXPECT_STRNE(dr_status_name(DR_ERR_CONFIG), dr_status_name(DR_ERR_STAGE));
    dr_string_free(nullptr);
}

TEST(CApi, CleanText) {
    Owned out;
    ASSERT_EQ(dr_clean_text("<p>Hi</p>", &out.p), DR_OK);
    EXPECT_EQ(out.str(), "Hi");
    Owned out2;
    ASSERT_EQ(dr_clean_text("caf\xc3\xa9\nvisit https://x.com now", &out2.p), DR_OK);
    EXPECT_EQ(out2.str(), "cafe visit now");
    EXPECT_STREQ(dr_last_error(), "");
}

TEST(CApi, NullArgumentsReportInvalidArgument) {
    char* out = nullptr;
    EXPECT_EQ(dr_clean_text(nullptr, &out), DR_ERR_INVALID_ARGUMENT);
    EXPECT_NE(std::string(dr_last_error()), "");
    EXPECT_EQ(dr_clean_text("x", nullptr), DR_ERR_INVALID_ARGUMENT);
    dr_corpus* c = nullptr;
    EXPECT_EQ(dr_corpus_open(nullptr, 1, &c), DR_ERR_INVALID_ARGUMENT);
    EXPECT_EQ(dr_corpus_size(nullptr), 0u);
    dr_corpus_free(nullptr);
}

TEST(CApi, MissingFileIsIoError) {
    dr_corpus* c = nullptr;
    EXPECT_EQ(dr_corpus_open("/nonexistent/corpus.jsonl", 1, &c), DR_ERR_IO);
    EXPECT_EQ(c, nullptr);
    EXPECT_NE(std::string(dr_last_error()).find("/nonexistent/corpus.jsonl"), std::string::npos);
}

TEST(CApi, IndexSearchEvaluate) {
    const auto dir = scratch("search");
    dr_corpus* corpus = nullptr;
    ASSERT_EQ(dr_corpus_open((kToy / "corpus.jsonl").c_str(), 1, &corpus), DR_OK) << dr_last_error();
    EXPECT_EQ(dr_corpus_size(corpus), 200u);
    dr_queries* queries = nullptr;
    ASSERT_EQ(dr_queries_open((kToy / "queries.tsv").c_str(), &queries), DR_OK);
    EXPECT_EQ(dr_queries_size(queries), 20u);

    dr_index* index = nullptr;
    ASSERT_EQ(dr_index_build(corpus, R"({"k1":0.9,"b":0.4})", &index), DR_OK) << dr_last_error();
    Owned stats;
    ASSERT_EQ(dr_index_stats(index, &stats.p), DR_OK);
    EXPECT_NE(stats.str().find("\"documents\":200"), std::string::npos) << stats.str();

    const auto snap = dir / "toy.idx";
    ASSERT_EQ(dr_index_save(index, snap.c_str()), DR_OK) << dr_last_error();
    dr_index* loaded = nullptr;
    ASSERT_EQ(dr_index_load(snap.c_str(), &loaded), DR_OK) << dr_last_error();

    dr_run* a = nullptr;
    dr_run* b = nullptr;
    ASSERT_EQ(dr_index_search(index, queries, 1000, nullptr, &a), DR_OK) << dr_last_error();
    ASSERT_EQ(dr_index_search(loaded, queries, 1000, "", &b), DR_OK);
    EXPECT_EQ(dr_run_query_count(a), 20u);
    ASSERT_EQ(dr_run_save_trec(a, "x", (dir / "a.trec").c_str()), DR_OK);
    ASSERT_EQ(dr_run_save_trec(b, "x", (dir / "b.trec").c_str()), DR_OK);
    EXPECT_EQ(slurp(dir / "a.trec"), slurp(dir / "b.trec"));

    Owned report;
    ASSERT_EQ(dr_evaluate(a, (kToy / "qrels.txt").c_str(), "recall@1000,ndcg@10", "json", &report.p), DR_OK)
        << dr_last_error();
    EXPECT_NE(report.str().find("recall@1000"), std::string::npos);
    Owned bad;
    EXPECT_EQ(dr_evaluate(a, (kToy / "qrels.txt").c_str(), "bogus@3", "json", &bad.p), DR_ERR_INVALID_ARGUMENT);
    EXPECT_EQ(dr_evaluate(a, (kToy / "qrels.txt").c_str(), "ndcg@10", "xml", &bad.p), DR_ERR_INVALID_ARGUMENT);

    dr_run* reloaded = nullptr;
    ASSERT_EQ(dr_run_load((dir / "a.trec").c_str(), &reloaded), DR_OK);
    EXPECT_EQ(dr_run_query_count(reloaded), 20u);
    ASSERT_EQ(dr_run_save_jsonl(a, queries, corpus, (kToy / "qrels.txt").c_str(), (dir / "a.jsonl").c_str()),
              DR_OK)
        << dr_last_error();
    dr_run* from_jsonl = nullptr;
    ASSERT_EQ(dr_run_load((dir / "a.jsonl").c_str(), &from_jsonl), DR_OK) << dr_last_error();
    EXPECT_EQ(dr_run_query_count(from_jsonl), 20u);

    // Unknown option keys are rejected rather than ignored.
    dr_run* c = nullptr;
    EXPECT_EQ(dr_index_search(index, queries, 10, R"({"k3":1})", &c), DR_ERR_INVALID_ARGUMENT);
    EXPECT_EQ(dr_index_search(index, queries, 10, "not json", &c), DR_ERR_INVALID_ARGUMENT);

    dr_run_free(from_jsonl);
    dr_run_free(reloaded);
    dr_run_free(a);
    dr_run_free(b);
    dr_index_free(loaded);
    dr_index_free(index);
    dr_queries_free(queries);
    dr_corpus_free(corpus);
}

TEST(CApi, DenseAndRerank) {
    dr_corpus* corpus = nullptr;
    ASSERT_EQ(dr_corpus_open((kToy / "corpus.jsonl").c_str(), 1, &corpus), DR_OK);
    dr_queries* queries = nullptr;
    ASSERT_EQ(dr_queries_open((kToy / "queries.tsv").c_str(), &queries), DR_OK);
    dr_index* index = nullptr;
    ASSERT_EQ(dr_index_build(corpus, nullptr, &index), DR_OK);
    dr_run* first = nullptr;
    ASSERT_EQ(dr_index_search(index, queries, 1000, nullptr, &first), DR_OK);

    dr_run* dense = nullptr;
    ASSERT_EQ(dr_dense_rescore(first, queries, corpus, R"({"endpoint":"builtin:embed=bow,dim=64","k":50})", &dense),
              DR_OK)
        << dr_last_error();
    EXPECT_EQ(dr_run_query_count(dense), 20u);

    const std::string opts = std::string(R"({"strategy":"tournament","endpoint":"builtin:scorer=oracle,qrels=)") +
                             (kToy / "qrels.txt").string() + R"(","depth":50})";
    dr_run* reranked = nullptr;
    Owned stats;
    ASSERT_EQ(dr_rerank(dense, queries, corpus, opts.c_str(), &reranked, &stats.p), DR_OK) << dr_last_error();
    EXPECT_NE(stats.str().find("scorer_calls"), std::string::npos) << stats.str();

    dr_run* failed = nullptr;
    EXPECT_EQ(dr_rerank(dense, queries, corpus, R"({"strategy":"tournament","endpoint":"nope:"})", &failed, nullptr),
              DR_ERR_CONFIG);
    EXPECT_EQ(dr_rerank(dense, queries, corpus, R"({"strategy":"bogus","endpoint":"builtin:"})", &failed, nullptr),
              DR_ERR_CONFIG);
    EXPECT_EQ(dr_dense_rescore(first, queries, corpus, R"({"endpoint":"exec:true"})", &failed), DR_ERR_PROVIDER);

    dr_run_free(reranked);
    dr_run_free(dense);
    dr_run_free(first);
    dr_index_free(index);
    dr_queries_free(queries);
    dr_corpus_free(corpus);
}

TEST(CApi, CleanupReportAndShift) {
    const auto dir = scratch("shift");
    write(dir / "a.jsonl", "{\"id\":\"a1\",\"text\":\"<b>alpha</b> beta\"}\n{\"id\":\"a2\",\"text\":\"gamma\"}\n");
    write(dir / "b.jsonl", "{\"id\":\"b1\",\"text\":\"alpha delta\"}\n");
    dr_corpus* raw = nullptr;
    dr_corpus* clean = nullptr;
    ASSERT_EQ(dr_corpus_open((dir / "a.jsonl").c_str(), 0, &raw), DR_OK);
    ASSERT_EQ(dr_corpus_open((dir / "a.jsonl").c_str(), 1, &clean), DR_OK);
    Owned report;
    ASSERT_EQ(dr_cleanup_report(raw, clean, &report.p), DR_OK) << dr_last_error();
    EXPECT_NE(report.str().find("byte_reduction_percent"), std::string::npos) << report.str();

    const std::string pa = (dir / "a.jsonl").string(), pb = (dir / "b.jsonl").string();
    const char* paths[] = {pa.c_str(), pb.c_str()};
    const char* labels[] = {"A", "B"};
    Owned js, table;
    ASSERT_EQ(dr_shift_report(paths, labels, 2, nullptr, &js.p, &table.p), DR_OK) << dr_last_error();
    EXPECT_NE(js.str().find("\"similarity\""), std::string::npos);
    EXPECT_NE(table.str().find("A"), std::string::npos);
    Owned js1;
    EXPECT_EQ(dr_shift_report(paths, labels, 1, nullptr, &js1.p, nullptr), DR_ERR_INVALID_ARGUMENT);

    dr_corpus_free(raw);
    dr_corpus_free(clean);
}

TEST(CApi, PipelineValidateAndRun) {
    const auto dir = scratch("pipeline");
    const auto config = (kToy / "pipeline.json").string();
    Owned findings;
    ASSERT_EQ(dr_pipeline_validate(config.c_str(), nullptr, &findings.p), DR_OK) << dr_last_error();
    EXPECT_EQ(findings.str(), "[]");
    Owned findings2;
    ASSERT_EQ(dr_pipeline_validate(config.c_str(), R"({"second_stage":{"k":5000}})", &findings2.p), DR_OK);
    EXPECT_NE(findings2.str(), "[]");

    const std::string overrides = R"({"output":{"trec_run":")" + (dir / "r.trec").string() + R"(","jsonl":")" +
                                  (dir / "r.jsonl").string() + R"(","trace":")" + (dir / "t.json").string() + R"("}})";
    Owned summary;
    ASSERT_EQ(dr_pipeline_run(config.c_str(), overrides.c_str(), &summary.p), DR_OK) << dr_last_error();
    EXPECT_NE(summary.str().find("\"queries\":20"), std::string::npos) << summary.str();
    EXPECT_TRUE(fs::exists(dir / "r.trec"));

    EXPECT_EQ(dr_pipeline_run("/nonexistent.json", nullptr, nullptr), DR_ERR_CONFIG);
    EXPECT_EQ(dr_pipeline_run(config.c_str(), R"({"bogus":1})", nullptr), DR_ERR_CONFIG);
    EXPECT_EQ(dr_pipeline_run(config.c_str(), R"({"corpus":"missing.jsonl"})", nullptr), DR_ERR_STAGE);
}
