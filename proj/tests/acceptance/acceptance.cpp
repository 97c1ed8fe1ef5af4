// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "golden_cases.hpp"
#include "support.hpp"
#include "zelda/eval.hpp"
#include "zelda/fixtures.hpp"
#include "zelda/frame_store.hpp"
#include "zelda/pipeline.hpp"
#include "zelda/prompts.hpp"
#include "zelda/service.hpp"

using namespace zelda;
using namespace zelda::test;

namespace {

// Pinned tolerances and budgets.
constexpr double kApTolerance = 1e-5;
constexpr double kApsTolerance = 1e-9;
constexpr double kSoftmaxSumTolerance = 1e-6;
constexpr double kOracleBudgetSeconds = 60.0;
constexpr double kFixtureBudgetSeconds = 5.0;
constexpr double kArchiveBudgetSeconds = 10.0;

/// Collects failure messages for one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 8) failures_.push_back(what);
        if (!ok) ++count_;
    }
    bool ok() const { return count_ == 0; }
    std::string summary() const {
        std::ostringstream out;
        out << count_ << " failure(s)";
        for (const auto& f : failures_) out << "\n    - " << f;
        return out.str();
    }

private:
    std::vector<std::string> failures_;
    std::size_t count_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Text -> seeded unit vector; stands in for a text encoder.
BatchEmbedFn hashed_embedder(std::size_t dim) {
    return [dim](const std::vector<std::string>& texts) {
        std::vector<EmbeddingVector> out;
        for (const auto& t : texts) {
            FixtureRng rng(fnv1a(t));
            out.push_back(rng.unit_vector(dim));
        }
        return out;
    };
}

std::vector<FrameId> ids_of(const std::vector<ScoredCandidate>& c) {
    std::vector<FrameId> out;
    for (const auto& s : c) out.push_back(s.frame_id);
    return out;
}

std::string describe(std::size_t trial, std::size_t n, std::size_t d, double t, std::size_t k) {
    std::ostringstream out;
    out << "trial " << trial << " (N=" << n << ", D=" << d << ", threshold=" << t << ", k=" << k << ")";
    return out.str();
}

// ---- criteria 1 and 2 ------------------------------------------------------

struct DiversifyChecks {
    Check oracle;
    Check invariant;
    double seconds = 0.0;
};

DiversifyChecks check_diversify() {
    DiversifyChecks out;
    const std::size_t dims[] = {8, 16, 512};
    const double thresholds[] = {0.5, 0.8, 0.95};
    const std::size_t ks[] = {5, 10, 20};
    FixtureRng rng(20240601);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(500);
        const std::size_t d = dims[rng.below(3)];
        const double t = thresholds[rng.below(3)];
        const std::size_t k = ks[rng.below(3)];
        const auto where = describe(trial, n, d, t, k);

        const auto dataset = Dataset::from_embeddings("trial", clustered_vectors(rng, n, d));
        const auto ranked = random_ranked(rng, dataset);
        const auto expected = oracle_diversify(dataset, ranked, t, k);
        const auto actual = diversify_frames(dataset, ranked, t, k);

        // Criterion 1: same partition, same order, same scores and statuses.
        out.oracle.expect(ids_of(actual.kept) == expected.kept, where + ": kept list differs");
        out.oracle.expect(ids_of(actual.pruned) == expected.pruned, where + ": pruned list differs");
        std::unordered_map<FrameId, std::size_t> position;
        for (std::size_t i = 0; i < ranked.size(); ++i) position[ranked[i].frame_id] = i;
        for (const auto* group : {&actual.kept, &actual.pruned}) {
            for (const auto& c : *group) {
                const auto i = position.at(c.frame_id);
                out.oracle.expect(c.status == expected.status[i],
                                  where + ": status of frame " + std::to_string(c.frame_id));
                out.oracle.expect(c.diversity_score == expected.score[i],
                                  where + ": diversity score of frame " + std::to_string(c.frame_id));
            }
        }

        // Criterion 2: non-restored kept pairs stay below the threshold, and
        // restoration happens exactly when the kept count would fall short.
        std::vector<const ScoredCandidate*> strictly_kept;
        std::size_t restored = 0;
        for (const auto& c : actual.kept) {
            if (c.status == CandidateStatus::kKept) strictly_kept.push_back(&c);
            if (c.status == CandidateStatus::kRestoredMinK) ++restored;
        }
        for (std::size_t a = 0; a < strictly_kept.size(); ++a) {
            for (std::size_t b = a + 1; b < strictly_kept.size(); ++b) {
                const double s = cosine_similarity(dataset.embedding_at(strictly_kept[a]->row),
                                                   dataset.embedding_at(strictly_kept[b]->row));
                out.invariant.expect(s < t, where + ": kept pair above threshold");
            }
        }
        const std::size_t floor = std::min(k, n);
        const bool short_of_floor = strictly_kept.size() < floor;
        out.invariant.expect((restored > 0) == short_of_floor, where + ": restoration iff below min(k, N)");
        if (short_of_floor) out.invariant.expect(actual.kept.size() == floor, where + ": restored up to min(k, N)");
    }
    out.seconds = seconds_since(start);
    out.oracle.expect(out.seconds < kOracleBudgetSeconds, "runtime " + std::to_string(out.seconds) + "s");
    return out;
}

// ---- criterion 3 -----------------------------------------------------------

Check check_metrics() {
    Check check;
    struct Pattern {
        std::vector<int> rel;
        double ap;
    };
    // AP = (1/RF) * sum P(k) r(k), RF = relevant frames returned.
    const std::vector<Pattern> patterns = {
        {{1}, 1.0},
        {{0}, 0.0},
        {{1, 0}, 1.0},
        {{0, 1}, 1.0 / 2},
        {{1, 1}, 1.0},
        {{1, 0, 1}, 5.0 / 6},
        {{0, 1, 1}, 7.0 / 12},
        {{0, 0, 1}, 1.0 / 3},
        {{1, 1, 0, 1}, 11.0 / 12},
        {{1, 0, 0, 1}, 3.0 / 4},
        {{0, 1, 0, 1}, 1.0 / 2},
        {{0, 0, 0, 1}, 1.0 / 4},
        {{1, 1, 1, 1}, 1.0},
        {{0, 1, 1, 1}, 23.0 / 36},
        {{1, 0, 1, 0, 1}, 34.0 / 45},
        {{0, 0, 0, 0, 1}, 1.0 / 5},
        {{1, 0, 0, 0, 0}, 1.0},
        {{0, 1, 0, 0, 1}, 9.0 / 20},
        {{1, 1, 0, 0, 1, 1}, 49.0 / 60},
        {{0, 0, 0, 0, 0, 1}, 1.0 / 6},
        {{0, 1, 0, 1, 0, 1}, 1.0 / 2},
        {{1, 0, 1, 0, 1, 0}, 34.0 / 45},
        {{0, 0, 1, 1, 0, 0}, 5.0 / 12},
        {{1, 1, 1, 0, 0, 0}, 1.0},
        {{0, 0, 0, 0, 0, 0}, 0.0},
    };
    check.expect(patterns.size() == 25, "pattern table size");
    for (const auto& p : patterns) {
        const double ap = average_precision(p.rel);
        std::string name = "[";
        for (int r : p.rel) name += std::to_string(r);
        check.expect(std::abs(ap - p.ap) <= kApTolerance, "AP" + name + "] = " + std::to_string(ap));
    }
    check.expect(std::abs(average_precision(std::vector<int>{1, 1, 0, 1}) - 0.91667) <= kApTolerance,
                 "AP[1101] vs 0.91667");

    FixtureRng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t k = 2 + rng.below(49);
        const std::size_t d = 2 + rng.below(64);
        std::vector<EmbeddingVector> v;
        for (std::size_t i = 0; i < k; ++i) v.push_back(rng.unit_vector(d));
        if (trial % 3 == 0) v[k - 1] = v[0];
        const double aps = average_pairwise_similarity(v);
        check.expect(std::abs(aps - oracle_pairwise_mean(v)) <= kApsTolerance,
                     "APS trial " + std::to_string(trial) + " (K=" + std::to_string(k) + ")");
    }
    return check;
}

// ---- criterion 4 -----------------------------------------------------------

Check check_softmax_and_ranking() {
    Check check;
    FixtureRng rng(4);

    // A real 1,209-prompt set: query + 1,203 LVIS labels + 5 quality terms.
    const auto labels = load_label_set(default_label_set_path());
    const auto prompts =
        assemble_prompt_set("forklift on a loading dock", labels, default_quality_terms(), PromptOptions{},
                            hashed_embedder(32));
    check.expect(prompts.size() == 1209, "prompt count " + std::to_string(prompts.size()));
    std::vector<EmbeddingVector> frames;
    for (int i = 0; i < 200; ++i) frames.push_back(rng.unit_vector(32));
    const auto dataset = Dataset::from_embeddings("softmax", frames);
    for (double temperature : {1.0, 100.0, 1000.0}) {
        for (const auto& c : generate_candidates(dataset, prompts, temperature)) {
            double total = c.query_confidence + c.label_confidence;
            for (double q : c.quality_confidences) total += q;
            check.expect(std::abs(total - 1.0) <= kSoftmaxSumTolerance,
                         "confidence sum " + std::to_string(total) + " at T=" + std::to_string(temperature));
        }
    }

    // Argmax is the same at every temperature and equals the argmax of the scores.
    for (int row = 0; row < 500; ++row) {
        std::vector<double> scores(1209);
        for (auto& s : scores) s = rng.uniform() * 2.0 - 1.0;
        const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        for (double temperature : {0.5, 1.0, 10.0, 100.0, 1000.0}) {
            const auto p = softmax(scores, temperature).confidences;
            double sum = 0.0;
            for (double x : p) sum += x;
            check.expect(std::abs(sum - 1.0) <= kSoftmaxSumTolerance, "softmax sum");
            const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
            check.expect(arg == best, "argmax moved at T=" + std::to_string(temperature));
        }
    }

    // With every stage off and only the query prompt, ranking is CLIP-Relevant.
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        const std::size_t d = 4 + rng.below(60);
        const auto ds = Dataset::from_embeddings("relevant", clustered_vectors(rng, n, d));
        const auto query = rng.unit_vector(d);
        const auto p = assemble_prompt_set(query, {}, {}, PromptOptions{}, BatchEmbedFn{});
        QueryOptions opts;
        opts.k = 1 + rng.below(n + 10);
        opts.enable_diversity = false;
        opts.enable_quality = false;
        const auto result = execute_query(ds, p, opts);
        check.expect(ids_of(result.ranked) == baseline_clip_relevant(ds, query, opts.k),
                     "stages-off ordering, fixture " + std::to_string(trial));
    }
    return check;
}

// ---- criterion 5 -----------------------------------------------------------

double mean_aps(const EvalReport& r) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& q : r.per_query) {
        if (q.aps) {
            sum += *q.aps;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

Check check_cluster_fixture() {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    const auto fx = make_cluster_fixture({});  // 4 x 25, D=16, seed 7
    const auto dataset = fixture_dataset(fx);
    EvalContext ctx;
    ctx.dataset = &dataset;
    ctx.embed = make_cached_embedder(&fx.prompts, {});
    ctx.label_set = fx.labels;
    ctx.quality_terms = default_quality_terms();
    ctx.query_options.temperature = 100.0;
    ctx.query_options.prune_threshold = 0.80;
    constexpr std::size_t k = 4;

    for (std::size_t c = 0; c < fx.concepts.size(); ++c) {
        const auto& query = fx.concepts[c];
        std::set<std::size_t> zelda_clusters;
        for (FrameId id : run_method(ctx, query, k, EvalMethod::kZelda)) zelda_clusters.insert(fx.cluster_of[id]);
        check.expect(zelda_clusters.size() == 4, query + ": Zelda top-4 covers " +
                                                     std::to_string(zelda_clusters.size()) + " clusters");
        std::set<std::size_t> relevant_clusters;
        for (FrameId id : run_method(ctx, query, k, EvalMethod::kClipRelevant)) {
            relevant_clusters.insert(fx.cluster_of[id]);
        }
        check.expect(relevant_clusters == std::set<std::size_t>{c}, query + ": CLIP-Relevant top-4 not one cluster");
    }

    const auto zelda = evaluate_method(ctx, fx.judgments, k, EvalMethod::kZelda);
    const auto relevant = evaluate_method(ctx, fx.judgments, k, EvalMethod::kClipRelevant);
    const auto diverse = evaluate_method(ctx, fx.judgments, k, EvalMethod::kClipDiverse);
    check.expect(mean_aps(zelda) < mean_aps(relevant), "APS(Zelda)=" + std::to_string(mean_aps(zelda)) +
                                                           " not below APS(CLIP-Relevant)=" +
                                                           std::to_string(mean_aps(relevant)));
    check.expect(zelda.map >= diverse.map, "MAP(Zelda)=" + std::to_string(zelda.map) + " below MAP(CLIP-Diverse)=" +
                                               std::to_string(diverse.map));
    const double secs = seconds_since(start);
    check.expect(secs < kFixtureBudgetSeconds, "runtime " + std::to_string(secs) + "s");
    return check;
}

// ---- criterion 6 -----------------------------------------------------------

Check check_quality_pruning() {
    Check check;
    constexpr std::size_t k = 20;
    std::size_t seeds_with_blurry_baseline = 0;
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const auto fx = make_quality_fixture(seed);
        const auto dataset = Dataset::from_embeddings("quality", fx.frames);
        const auto embed = make_cached_embedder(&fx.prompts, {});
        const auto with_quality = assemble_prompt_set(fx.query, fx.labels, default_quality_terms(), {}, embed);
        const auto without_quality = assemble_prompt_set(fx.query, fx.labels, {}, {}, embed);
        const std::string where = "seed " + std::to_string(seed);

        // Fixture precondition: planted frames out-score the query on a quality prompt.
        for (const auto& c : generate_candidates(dataset, with_quality, 100.0)) {
            if (fx.blurry[c.frame_id]) {
                check.expect(c.max_quality_confidence() > c.query_confidence,
                             where + ": planted frame " + std::to_string(c.frame_id) + " is not quality-dominated");
            }
        }

        QueryOptions opts;
        opts.k = k;
        opts.temperature = 100.0;
        const auto pruned = execute_query(dataset, with_quality, opts);
        const auto unpruned = execute_query(dataset, without_quality, opts);
        std::size_t blurry_with = 0;
        std::size_t blurry_without = 0;
        for (const auto& c : pruned.ranked) {
            if (!fx.blurry[c.frame_id]) continue;
            ++blurry_with;
            check.expect(c.status == CandidateStatus::kRestoredMinK,
                         where + ": blurry frame " + std::to_string(c.frame_id) + " in top-K without restoration");
        }
        for (const auto& c : unpruned.ranked) blurry_without += fx.blurry[c.frame_id] ? 1 : 0;
        if (blurry_without > 0) ++seeds_with_blurry_baseline;
        check.expect(blurry_with <= blurry_without, where + ": " + std::to_string(blurry_with) +
                                                        " blurry with quality prompts vs " +
                                                        std::to_string(blurry_without) + " without");
    }
    // Without quality prompts the planted frames must actually reach top-K,
    // otherwise the comparison above says nothing.
    check.expect(seeds_with_blurry_baseline == 25,
                 "blurry frames reach top-K without quality prompts in only " +
                     std::to_string(seeds_with_blurry_baseline) + "/25 seeds");
    return check;
}

// ---- criterion 7 -----------------------------------------------------------

Check check_archive() {
    Check check;
    TempDir dir("accept-archive");
    const auto start = std::chrono::steady_clock::now();
    FixtureRng rng(10000);
    VectorTable table;
    table.dim = 512;
    table.values.resize(10000 * 512);
    for (auto& x : table.values) x = static_cast<float>(rng.normal());
    const auto path = dir / "big.zea";
    write_archive(path, table, false, "acceptance");
    const auto back = read_archive(path);
    check.expect(back.header.count == 10000 && back.header.dim == 512, "header shape");
    check.expect(back.payload.values.size() == table.values.size() &&
                     std::memcmp(back.payload.values.data(), table.values.data(),
                                 table.values.size() * sizeof(float)) == 0,
                 "payload not bit-identical");
    const double secs = seconds_since(start);
    check.expect(secs < kArchiveBudgetSeconds, "runtime " + std::to_string(secs) + "s");

    VectorTable small;
    small.dim = 4;
    small.values = {1, 0, 0, 0, 0, 1, 0, 0};
    write_archive(dir / "small.zea", small, true, "m");
    const std::string good = slurp(dir / "small.zea");

    const auto code_of = [&](const std::string& bytes) -> std::optional<ErrorCode> {
        spit(dir / "bad.zea", bytes);
        try {
            read_archive(dir / "bad.zea");
        } catch (const Error& e) {
            return e.code();
        }
        return std::nullopt;
    };
    std::string magic = good;
    magic.replace(0, 4, "ZEB1");
    check.expect(code_of(magic) == ErrorCode::kBadMagic, "ZEB1 magic");
    check.expect(code_of("ZEA") == ErrorCode::kBadMagic, "short file");
    check.expect(code_of(good.substr(0, good.size() - 4)) == ErrorCode::kHeaderMismatch, "truncated payload");
    check.expect(code_of(good + std::string(4, '\0')) == ErrorCode::kHeaderMismatch, "padded payload");
    std::string long_header = good;
    long_header[4] = '\xff';
    long_header[5] = '\xff';
    check.expect(code_of(long_header) == ErrorCode::kHeaderMismatch, "header length beyond file");
    return check;
}

// ---- criterion 8 -----------------------------------------------------------

Check check_service_goldens() {
    Check check;
    const auto fx = make_cluster_fixture({});
    for (int round = 0; round < 2; ++round) {
        TempDir root("accept-golden");
        const auto service = golden_service(fx, root.path());
        check.expect(!service->config().embedder_url.has_value(), "embedder configured");
        for (const auto& c : golden_cases(fx, root / "fixture")) {
            const auto golden_path = std::filesystem::path(ZELDA_GOLDEN_DIR) / c.file;
            if (!std::filesystem::exists(golden_path)) {
                check.expect(false, "missing golden " + c.file);
                continue;
            }
            const auto r = run_golden_case(*service, c);
            check.expect(r.status == 200, c.file + ": HTTP " + std::to_string(r.status));
            check.expect(r.body == slurp(golden_path), c.file + ": differs from golden (round " +
                                                           std::to_string(round) + ")");
        }
    }
    return check;
}

}  // namespace

int main() {
    int failed = 0;
    const auto report = [&](int id, const std::string& title, const Check& c, const std::string& extra = "") {
        std::cout << (c.ok() ? "PASS" : "FAIL") << " [" << id << "] " << title << extra;
        if (!c.ok()) {
            std::cout << ": " << c.summary();
            ++failed;
        }
        std::cout << std::endl;
    };
    const auto guarded = [&](int id, const std::string& title, const std::function<Check()>& fn) {
        try {
            report(id, title, fn());
        } catch (const std::exception& e) {
            std::cout << "FAIL [" << id << "] " << title << ": exception: " << e.what() << std::endl;
            ++failed;
        }
    };

    try {
        const auto d = check_diversify();
        const std::string timing = " (" + std::to_string(d.seconds) + "s)";
        report(1, "diversify_frames matches brute-force oracle on 1000 random inputs", d.oracle, timing);
        report(2, "kept pairs below threshold; restoration iff kept < min(k, N)", d.invariant);
    } catch (const std::exception& e) {
        std::cout << "FAIL [1] diversify oracle: exception: " << e.what() << std::endl;
        std::cout << "FAIL [2] kept-pair invariant: exception: " << e.what() << std::endl;
        failed += 2;
    }
    guarded(3, "AP on 25 hand-computed patterns; APS matches pairwise oracle", check_metrics);
    guarded(4, "softmax sums to 1 over 1209 prompts; argmax temperature-invariant; stages-off == CLIP-Relevant",
            check_softmax_and_ranking);
    guarded(5, "4-cluster fixture: one frame per cluster, lower APS than CLIP-Relevant, MAP >= CLIP-Diverse",
            check_cluster_fixture);
    guarded(6, "quality-dominated frames only enter top-K via restoration", check_quality_pruning);
    guarded(7, "10000 x 512 archive round trip is bit-identical; corrupt archives rejected", check_archive);
    guarded(8, "service responses match golden files with no embedder", check_service_goldens);
    std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed")
              << std::endl;
    return failed == 0 ? 0 : 1;
}
