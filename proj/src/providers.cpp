#include "driftrank/providers.hpp"

#include "driftrank/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace driftrank {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

double unit_uniform(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

double seeded_gaussian(std::uint64_t seed) {
    std::uint64_t state = seed;
    const double u1 = std::max(unit_uniform(state), 1e-300);
    const double u2 = unit_uniform(state);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        fail(ErrorKind::Config, "mock option " + std::string(key) + ": bad value '" + std::string(text) + "'");
    }
    return value;
}

json error_reply(const std::string& message) { return json{{"error", message}}; }

} // namespace

MockConfig MockConfig::parse(std::string_view options) {
    MockConfig cfg;
    std::size_t start = 0;
    while (start < options.size()) {
        auto end = options.find(',', start);
        if (end == std::string_view::npos) {
            end = options.size();
        }
        const auto item = options.substr(start, end - start);
        start = end + 1;
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        const auto key = item.substr(0, eq);
        const auto value = eq == std::string_view::npos ? std::string_view("1") : item.substr(eq + 1);
        if (key == "embed") {
            cfg.embed = value;
        } else if (key == "dim") {
            cfg.dim = parse_number<std::size_t>(key, value);
        } else if (key == "scorer") {
            cfg.scorer = value;
        } else if (key == "qrels") {
            cfg.qrels = value;
        } else if (key == "corpus") {
            cfg.corpus = value;
        } else if (key == "value") {
            cfg.value = parse_number<double>(key, value);
        } else if (key == "sigma") {
            cfg.sigma = parse_number<double>(key, value);
        } else if (key == "bias") {
            cfg.bias = parse_number<double>(key, value);
        } else if (key == "seed") {
            cfg.seed = parse_number<std::uint64_t>(key, value);
        } else if (key == "fail_every") {
            cfg.fail_every = parse_number<std::size_t>(key, value);
        } else if (key == "raw") {
            cfg.raw = value != "0";
        } else {
            fail(ErrorKind::Config, "unknown mock option '" + std::string(key) + "'");
        }
    }
    return cfg;
}

MockProvider::MockProvider(MockConfig config) : config_(std::move(config)) {
    static const std::vector<std::string> scorers = {"oracle", "constant", "bm25", "noise", "biased", "identity"};
    if (std::find(scorers.begin(), scorers.end(), config_.scorer) == scorers.end()) {
        fail(ErrorKind::Config, "unknown mock scorer '" + config_.scorer + "'");
    }
    if (config_.embed != "hash" && config_.embed != "bow") {
        fail(ErrorKind::Config, "unknown mock embedding '" + config_.embed + "'");
    }
    if (config_.dim == 0) {
        fail(ErrorKind::Config, "mock embedding dim must be positive");
    }
    const bool needs_qrels = config_.scorer == "oracle" || config_.scorer == "noise" || config_.scorer == "biased";
    if (needs_qrels) {
        if (config_.qrels.empty()) {
            fail(ErrorKind::Config, "mock scorer '" + config_.scorer + "' needs qrels=<path>");
        }
        qrels_ = QrelSet::load(config_.qrels);
    }
    if (config_.scorer == "bm25") {
        if (config_.corpus.empty()) {
            fail(ErrorKind::Config, "mock scorer 'bm25' needs corpus=<path>");
        }
        index_ = std::make_shared<const InvertedIndex>(
            InvertedIndex::build(ingest_jsonl(config_.corpus, false), AnalyzerConfig{}));
    }
}

json MockProvider::handle(const json& request) const {
    try {
        if (!request.is_object() || !request.contains("op") || !request["op"].is_string()) {
            return error_reply("request needs an \"op\" field");
        }
        const auto op = request["op"].get<std::string>();
        if (op == "embed") {
            return handle_embed(request);
        }
        if (op != "score" && op != "rank") {
            return error_reply("unknown op '" + op + "'");
        }
        const auto n = ++calls_;
        if (config_.fail_every > 0 && n % config_.fail_every == 0) {
            return error_reply("injected failure on call " + std::to_string(n));
        }
        return op == "score" ? handle_score(request) : handle_rank(request);
    } catch (const std::exception& e) {
        return error_reply(e.what());
    }
}

std::vector<double> MockProvider::embed(std::string_view text, std::size_t truncate_tokens) const {
    std::vector<double> v(config_.dim, 0.0);
    if (config_.embed == "hash") {
        std::uint64_t state = fnv1a(text, config_.seed * 0x9e3779b97f4a7c15ULL);
        for (auto& x : v) {
            x = 2.0 * unit_uniform(state) - 1.0;
        }
        return v;
    }
    AnalyzerConfig cfg;
    cfg.max_tokens = truncate_tokens;
    for (const auto& token : tokenize(text, cfg)) {
        v[fnv1a(token, config_.seed) % config_.dim] += 1.0;
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0.0) {
        for (auto& x : v) {
            x /= norm;
        }
    }
    return v;
}

json MockProvider::handle_embed(const json& request) const {
    const auto truncate = request.value("truncate_tokens", std::size_t{512});
    if (!request.contains("items") || !request["items"].is_array()) {
        return error_reply("embed request needs \"items\"");
    }
    json vectors = json::array();
    for (const auto& item : request["items"]) {
        const auto id = item.at("id").get<std::string>();
        const auto text = item.at("text").get<std::string>();
        vectors.push_back({{"id", id}, {"values", embed(text, truncate)}});
    }
    return {{"dim", config_.dim}, {"vectors", std::move(vectors)}};
}

int MockProvider::max_grade(const std::string& qid) const {
    int best = 0;
    if (qrels_) {
        if (const auto* j = qrels_->judgments(qid)) {
            for (const auto& [_, g] : *j) {
                best = std::max(best, g);
            }
        }
    }
    return best;
}

double MockProvider::bm25_text_score(const std::string& query, const std::string& text) const {
    const auto& index = *index_;
    const auto doc_tokens = tokenize(text, index.analyzer());
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : doc_tokens) {
        ++tf[t];
    }
    double score = 0.0;
    for (const auto& term : tokenize(query, index.analyzer())) {
        const auto it = tf.find(term);
        if (it == tf.end()) {
            continue;
        }
        score += bm25_term_weight(index.idf(term), it->second, static_cast<double>(doc_tokens.size()),
                                  index.avg_doc_length(), index.params());
    }
    return score;
}

double MockProvider::relevance(const std::string& qid, const std::string& query,
                               const std::string& doc_id, const std::string& text) const {
    if (config_.scorer == "bm25") {
        return bm25_text_score(query, text);
    }
    if (config_.scorer == "constant" || config_.scorer == "identity") {
        return config_.value;
    }
    if (qid.empty() || doc_id.empty()) {
        fail(ErrorKind::Provider, "scorer '" + config_.scorer + "' needs \"qid\" and document ids");
    }
    const double grade = qrels_->grade(qid, doc_id).value_or(0);
    if (config_.scorer == "noise") {
        return grade + config_.sigma * seeded_gaussian(fnv1a(qid + '\x1f' + doc_id, config_.seed));
    }
    return grade;
}

json MockProvider::handle_score(const json& request) const {
    const auto qid = request.value("qid", std::string());
    const auto query = request.value("query", std::string());
    const auto doc_id = request.value("doc_id", std::string());
    const auto doc = request.value("doc", std::string());
    const double rel = relevance(qid, query, doc_id, doc);
    double prob;
    if (config_.scorer == "bm25") {
        prob = rel / (1.0 + rel);
    } else if (config_.scorer == "noise") {
        prob = 1.0 / (1.0 + std::exp(-(rel - 0.5)));
    } else if (config_.scorer == "constant" || config_.scorer == "identity") {
        prob = rel;
    } else {
        const int top = max_grade(qid);
        prob = top > 0 ? rel / top : 0.0;
    }
    return {{"prob", prob}};
}

json MockProvider::handle_rank(const json& request) const {
    if (!request.contains("passages") || !request["passages"].is_array()) {
        return error_reply("rank request needs \"passages\"");
    }
    const auto& passages = request["passages"];
    const auto n = passages.size();
    std::vector<std::string> ids(n);
    if (request.contains("doc_ids")) {
        const auto& doc_ids = request["doc_ids"];
        if (!doc_ids.is_array() || doc_ids.size() != n) {
            return error_reply("\"doc_ids\" must match \"passages\"");
        }
        for (std::size_t i = 0; i < n; ++i) {
            ids[i] = doc_ids[i].get<std::string>();
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (config_.scorer != "identity" && config_.scorer != "constant") {
        const auto qid = request.value("qid", std::string());
        const auto query = request.value("query", std::string());
        std::vector<double> score(n);
        std::vector<std::string> key(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto text = passages[i].get<std::string>();
            score[i] = relevance(qid, query, ids[i], text);
            if (config_.scorer == "biased") {
                score[i] += config_.bias * static_cast<double>(n - i) / static_cast<double>(n);
            }
            key[i] = ids[i].empty() ? text : ids[i];
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (score[a] != score[b]) {
                return score[a] > score[b];
            }
            return key[a] < key[b];
        });
    }
    std::vector<std::size_t> permutation;
    permutation.reserve(n);
    for (const auto i : order) {
        permutation.push_back(i + 1);
    }
    if (config_.raw) {
        std::string raw;
        for (std::size_t i = 0; i < permutation.size(); ++i) {
            raw += (i ? " > [" : "[") + std::to_string(permutation[i]) + "]";
        }
        return {{"raw", raw}};
    }
    return {{"permutation", permutation}};
}

} // namespace driftrank
