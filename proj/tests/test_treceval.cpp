#include "driftrank/error.hpp"
#include "driftrank/treceval.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace driftrank;

namespace {

RankedList list_of(const std::string& qid, const std::vector<std::string>& ids) {
    RankedList l{qid, {}};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        l.entries.push_back({ids[i], static_cast<double>(ids.size() - i), i + 1});
    }
    return l;
}

QrelSet qrels_of(const std::string& qid, const std::map<std::string, int>& grades) {
    QrelSet q;
    for (const auto& [d, g] : grades) {
        q.set(qid, d, g);
    }
    return q;
}

} // namespace

TEST(Metrics, NdcgHandExample) {
    // DCG = 0 + 1/log2(3) + 1/log2(4); IDCG = 1 + 1/log2(3).
    const auto qrels = qrels_of("q", {{"d1", 1}, {"d2", 0}, {"d3", 1}});
    const double dcg = 1 / std::log2(3.0) + 1 / std::log2(4.0);
    const double idcg = 1 + 1 / std::log2(3.0);
    EXPECT_NEAR(dcg, 1.1309, 1e-4);
    EXPECT_NEAR(idcg, 1.6309, 1e-4);
    const auto v = trec::ndcg_at_k(list_of("q", {"d2", "d1", "d3"}), qrels, 3);
    ASSERT_TRUE(v);
    EXPECT_NEAR(*v, dcg / idcg, 1e-15);
    EXPECT_NEAR(*v, 0.6934, 1e-4);
    EXPECT_NEAR(oracle::evaluate({"d2", "d1", "d3"}, {{"d1", 1}, {"d2", 0}, {"d3", 1}}, 3)->ndcg, *v, 1e-15);
}

TEST(Metrics, IdealAndEmptyRuns) {
    const auto qrels = qrels_of("q", {{"a", 3}, {"b", 2}, {"c", 1}});
    EXPECT_DOUBLE_EQ(*trec::ndcg_at_k(list_of("q", {"a", "b", "c"}), qrels, 10), 1.0);
    EXPECT_DOUBLE_EQ(*trec::map_at_k(list_of("q", {"a", "b", "c"}), qrels, 10), 1.0);
    EXPECT_DOUBLE_EQ(*trec::ndcg_at_k(list_of("q", {}), qrels, 10), 0.0);
}

TEST(Metrics, ApPrecisionRecallHandExample) {
    const auto qrels = qrels_of("q", {{"rel", 1}, {"irrel", 0}});
    const auto run = list_of("q", {"irrel", "rel"});
    EXPECT_DOUBLE_EQ(*trec::map_at_k(run, qrels, 2), 0.5);
    EXPECT_DOUBLE_EQ(*trec::precision_at_k(run, qrels, 2), 0.5);
    EXPECT_DOUBLE_EQ(*trec::recall_at_k(run, qrels, 2), 1.0);
}

TEST(Metrics, NothingRelevantRetrieved) {
    const auto qrels = qrels_of("q", {{"rel", 2}});
    const auto run = list_of("q", {"x", "y"});
    EXPECT_EQ(*trec::ndcg_at_k(run, qrels, 10), 0.0);
    EXPECT_EQ(*trec::map_at_k(run, qrels, 10), 0.0);
    EXPECT_EQ(*trec::precision_at_k(run, qrels, 10), 0.0);
    EXPECT_EQ(*trec::recall_at_k(run, qrels, 10), 0.0);
}

TEST(Metrics, SkippedQueries) {
    const auto qrels = qrels_of("q", {{"a", 0}});
    EXPECT_FALSE(trec::ndcg_at_k(list_of("q", {"a"}), qrels, 10));
    EXPECT_FALSE(trec::ndcg_at_k(list_of("other", {"a"}), qrels, 10));
    const auto report = evaluate({list_of("q", {"a"}), list_of("other", {"a"})}, qrels,
                                 parse_metric_list("ndcg@10"));
    EXPECT_EQ(report.evaluated(), 0u);
    EXPECT_EQ(report.skipped_no_relevant, std::vector<std::string>{"q"});
    EXPECT_EQ(report.skipped_unjudged, std::vector<std::string>{"other"});
}

TEST(Metrics, AgreeWithReferenceOnRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto f = fixtures::random_eval_fixture("q", seed);
        const auto qrels = qrels_of("q", f.grades);
        for (const std::size_t k : {10, 100}) {
            const auto ref = oracle::evaluate(f.run.doc_ids(), f.grades, k);
            const auto ndcg = trec::ndcg_at_k(f.run, qrels, k);
            ASSERT_EQ(ref.has_value(), ndcg.has_value()) << seed;
            if (!ref) {
                continue;
            }
            EXPECT_NEAR(*ndcg, ref->ndcg, 1e-9);
            EXPECT_NEAR(*trec::map_at_k(f.run, qrels, k), ref->map, 1e-9);
            EXPECT_NEAR(*trec::precision_at_k(f.run, qrels, k), ref->precision, 1e-9);
            EXPECT_NEAR(*trec::recall_at_k(f.run, qrels, k), ref->recall, 1e-9);
        }
    }
}

TEST(Metrics, SwapMonotonicity) {
    fixtures::Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        auto f = fixtures::random_eval_fixture("q", 1000 + static_cast<std::uint64_t>(trial));
        const auto qrels = qrels_of("q", f.grades);
        auto& e = f.run.entries;
        if (e.size() < 2 || !trec::ndcg_at_k(f.run, qrels, 10)) {
            continue;
        }
        const auto j = fixtures::pick(rng, e.size() - 1) + 1;
        const auto i = fixtures::pick(rng, j);
        const auto gi = qrels.grade("q", e[i].doc_id).value_or(0);
        const auto gj = qrels.grade("q", e[j].doc_id).value_or(0);
        if (gj <= gi) {
            continue;
        }
        for (const std::size_t k : {5, 10, 50}) {
            const auto before_ndcg = *trec::ndcg_at_k(f.run, qrels, k);
            const auto before_map = *trec::map_at_k(f.run, qrels, k);
            auto swapped = f.run;
            std::swap(swapped.entries[i].doc_id, swapped.entries[j].doc_id);
            EXPECT_GE(*trec::ndcg_at_k(swapped, qrels, k) + 1e-12, before_ndcg);
            if (gi == 0) {
                EXPECT_GE(*trec::map_at_k(swapped, qrels, k) + 1e-12, before_map);
            }
        }
    }
}

TEST(Metrics, BoundsOnRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto f = fixtures::random_eval_fixture("q", 500 + seed);
        const auto qrels = qrels_of("q", f.grades);
        for (const auto& m : parse_metric_list("ndcg@10,map@10,P@10,recall@10,ndcg@100")) {
            if (const auto v = evaluate_metric(m, f.run, qrels)) {
                EXPECT_GE(*v, 0.0);
                EXPECT_LE(*v, 1.0 + 1e-12);
            }
        }
    }
}

TEST(MetricSpec, Parsing) {
    EXPECT_EQ(MetricSpec::parse("ndcg@10"), (MetricSpec{MetricKind::NDCG, 10}));
    EXPECT_EQ(MetricSpec::parse("P@5"), (MetricSpec{MetricKind::Precision, 5}));
    EXPECT_EQ(MetricSpec::parse("map_cut@100"), (MetricSpec{MetricKind::MAP, 100}));
    EXPECT_EQ(MetricSpec::parse("recall@all"), (MetricSpec{MetricKind::Recall, 1000}));
    EXPECT_EQ(MetricSpec::parse("ndcg@10").name(), "ndcg@10");
    EXPECT_THROW(MetricSpec::parse("ndcg"), Error);
    EXPECT_THROW(MetricSpec::parse("bpref@10"), Error);
    EXPECT_THROW(MetricSpec::parse("ndcg@0"), Error);
    EXPECT_EQ(parse_metric_list("ndcg@10, map@100").size(), 2u);
}

TEST(Report, MeansOverEvaluatedQueries) {
    QrelSet qrels;
    qrels.set("q1", "a", 1);
    qrels.set("q2", "b", 1);
    const auto report = evaluate({list_of("q1", {"a"}), list_of("q2", {"x", "b"})}, qrels,
                                 parse_metric_list("P@1,recall@2"));
    EXPECT_EQ(report.evaluated(), 2u);
    EXPECT_DOUBLE_EQ(*report.mean_of(MetricSpec::parse("P@1")), 0.5);
    EXPECT_DOUBLE_EQ(*report.mean_of(MetricSpec::parse("recall@2")), 1.0);
    const auto j = report.to_json();
    EXPECT_EQ(j["evaluated"], 2);
    EXPECT_DOUBLE_EQ(j["mean"]["P@1"].get<double>(), 0.5);
    EXPECT_NE(report.to_text().find("P@1"), std::string::npos);
    EXPECT_THROW(evaluate({list_of("q1", {"a"}), list_of("q1", {"a"})}, qrels, report.metrics), Error);
}

TEST(TrecRun, FormatAndRoundTrip) {
    RankedList a{"q1", {{"d1", 2.5, 1}, {"d2", 1.0, 2}}};
    RankedList b{"q2", {{"x", 0.1, 1}}};
    const auto text = format_trec_run({a, b}, "tag");
    EXPECT_EQ(text, "q1 Q0 d1 1 2.5 tag\nq1 Q0 d2 2 1 tag\nq2 Q0 x 1 0.1 tag\n");
    const auto dir = fixtures::temp_dir("trec");
    write_trec_run({a, b}, "tag", dir / "run.trec");
    const auto back = read_trec_run(dir / "run.trec");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], a);
    EXPECT_EQ(back[1], b);
}

TEST(TrecRun, RandomRoundTripIsLossless) {
    const auto dir = fixtures::temp_dir("trec-rt");
    std::vector<RankedList> runs;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto f = fixtures::random_eval_fixture("q" + std::to_string(s), s);
        runs.push_back(std::move(f.run));
    }
    runs.erase(std::remove_if(runs.begin(), runs.end(), [](const RankedList& r) { return r.empty(); }), runs.end());
    write_trec_run(runs, "rt", dir / "r.trec");
    EXPECT_EQ(read_trec_run(dir / "r.trec"), runs);
}

TEST(TrecRun, TiesKeepStrictRanks) {
    RankedList l{"q", {{"b", 1.0, 0}, {"a", 1.0, 0}, {"c", 2.0, 0}}};
    sort_and_truncate(l, 10);
    EXPECT_EQ(format_trec_run({l}, "t"), "q Q0 c 1 2 t\nq Q0 a 2 1 t\nq Q0 b 3 1 t\n");
}

TEST(TrecRun, DeepListsAreTruncated) {
    RankedList l{"q", {}};
    for (std::size_t i = 0; i < 1005; ++i) {
        l.entries.push_back({"d" + std::to_string(i), 2000.0 - static_cast<double>(i), i + 1});
    }
    const auto text = format_trec_run({l}, "t");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1000);
}

TEST(TrecRun, MalformedLinesAreErrors) {
    const auto dir = fixtures::temp_dir("trec-bad");
    fixtures::write_file(dir / "r.trec", "q Q0 d 1 x tag\n");
    EXPECT_THROW(read_trec_run(dir / "r.trec"), Error);
    fixtures::write_file(dir / "s.trec", "q Q0 d 1\n");
    EXPECT_THROW(read_trec_run(dir / "s.trec"), Error);
}

TEST(RunJsonl, RoundTripWithAndWithoutOptionalFields) {
    std::vector<RunRecord> records = {
        {"q1", "first query", {{"d1", std::string("text one"), 0.75, 2}, {"d2", std::nullopt, 0.5, std::nullopt}}},
        {"q2", "", {}},
    };
    const auto dir = fixtures::temp_dir("jsonl");
    write_run_jsonl(records, dir / "r.jsonl");
    EXPECT_EQ(read_run_jsonl(dir / "r.jsonl"), records);
    const auto line = to_json(records[0]).dump();
    EXPECT_NE(line.find("\"query_id\""), std::string::npos);
    EXPECT_NE(line.find("\"doc\""), std::string::npos);
    EXPECT_NE(line.find("\"grade\""), std::string::npos);
}

TEST(RunJsonl, MalformedLineNamesLineNumber) {
    const auto dir = fixtures::temp_dir("jsonl-bad");
    fixtures::write_file(dir / "r.jsonl", "{\"query_id\":\"q\",\"docs\":[]}\n{\"docs\":[]}\n");
    try {
        read_run_jsonl(dir / "r.jsonl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(RunJsonl, AttachGradesFromQrels) {
    std::vector<RunRecord> records = {{"q", "", {{"a", std::nullopt, 1, std::nullopt}, {"b", std::nullopt, 0, std::nullopt}}}};
    QrelSet qrels;
    qrels.set("q", "a", 2);
    attach_grades(records, qrels);
    EXPECT_EQ(records[0].docs[0].grade, 2);
    EXPECT_EQ(records[0].docs[1].grade, std::nullopt);
}

TEST(ProxyEvaluate, TrecAndJsonlInputsAgreeWithTextReference) {
    const auto dir = fixtures::temp_dir("proxy");
    std::vector<RankedList> runs;
    QrelSet qrels;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto qid = "q" + std::to_string(s);
        auto f = fixtures::random_eval_fixture(qid, 7000 + s);
        for (const auto& [d, g] : f.grades) {
            qrels.set(qid, d, g);
        }
        runs.push_back(std::move(f.run));
    }
    write_trec_run(runs, "t", dir / "r.trec");
    qrels.save(dir / "qrels.txt");
    std::vector<RunRecord> records;
    for (const auto& r : runs) {
        RunRecord rec{r.query_id, "", {}};
        for (const auto& e : r.entries) {
            rec.docs.push_back({e.doc_id, std::nullopt, e.score, std::nullopt});
        }
        records.push_back(std::move(rec));
    }
    write_run_jsonl(records, dir / "r.jsonl");

    const auto metrics = parse_metric_list("ndcg@10,map@10,P@10,recall@10");
    const auto from_trec = proxy_evaluate(dir / "r.trec", dir / "qrels.txt", metrics);
    const auto from_jsonl = proxy_evaluate(dir / "r.jsonl", dir / "qrels.txt", metrics);
    const auto ref = oracle::evaluate_text(fixtures::read_file(dir / "r.trec"), fixtures::read_file(dir / "qrels.txt"), 10);
    EXPECT_EQ(from_trec.per_query, from_jsonl.per_query);
    ASSERT_EQ(from_trec.evaluated(), ref.size());
    for (const auto& [qid, cut] : ref) {
        const auto& v = from_trec.per_query.at(qid);
        EXPECT_NEAR(v[0], cut.ndcg, 1e-9);
        EXPECT_NEAR(v[1], cut.map, 1e-9);
        EXPECT_NEAR(v[2], cut.precision, 1e-9);
        EXPECT_NEAR(v[3], cut.recall, 1e-9);
    }
}

TEST(Qrels, LoadSaveRoundTrip) {
    const auto dir = fixtures::temp_dir("qrels");
    fixtures::write_file(dir / "q.txt", "q1 0 d1 2\nq1 0 d2 0\n\nq2 0 d9 1\n");
    const auto q = QrelSet::load(dir / "q.txt");
    EXPECT_EQ(q.grade("q1", "d1"), 2);
    EXPECT_EQ(q.relevant_count("q1"), 1u);
    EXPECT_EQ(q.query_ids(), (std::vector<std::string>{"q1", "q2"}));
    q.save(dir / "r.txt");
    const auto r = QrelSet::load(dir / "r.txt");
    EXPECT_EQ(r.grade("q2", "d9"), 1);
    EXPECT_EQ(r.size(), q.size());
    fixtures::write_file(dir / "bad.txt", "q1 0 d1 -1\n");
    EXPECT_THROW(QrelSet::load(dir / "bad.txt"), Error);
}
