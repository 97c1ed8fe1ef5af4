#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "support.hpp"
#include "zelda/prompts.hpp"

using namespace zelda;
using zelda::test::spit;
using zelda::test::TempDir;

namespace {

/// Deterministic text -> unit vector, counting calls.
struct FakeEmbedder {
    std::size_t dim = 8;
    std::vector<std::vector<std::string>> calls;

    EmbeddingVector vec(const std::string& text) const {
        FixtureRng rng(std::hash<std::string>{}(text));
        return rng.unit_vector(dim);
    }

    BatchEmbedFn fn() {
        return [this](const std::vector<std::string>& texts) {
            calls.push_back(texts);
            std::vector<EmbeddingVector> out;
            for (const auto& t : texts) out.push_back(vec(t));
            return out;
        };
    }
};

std::vector<std::string> texts_of(const PromptSet& p) {
    std::vector<std::string> out;
    for (const auto& i : p.info()) out.push_back(i.text);
    return out;
}

}  // namespace

TEST(ApplyTemplate, SinglePlaceholder) {
    EXPECT_EQ(apply_template("a photo of {}", "dog"), "a photo of dog");
    EXPECT_EQ(apply_template("{}", "dog"), "dog");
    EXPECT_EQ(ZELDA_ERROR_CODE(apply_template("no slot", "dog")), ErrorCode::kInvalidArgument);
    EXPECT_EQ(ZELDA_ERROR_CODE(apply_template("{} and {}", "dog")), ErrorCode::kInvalidArgument);
}

TEST(AssemblePromptSet, OrderAndTemplate) {
    FakeEmbedder e;
    const std::vector<std::string> labels{"cat", "dog"};
    const std::vector<std::string> quality{"blurry"};
    const auto p = assemble_prompt_set("  red car ", labels, quality, PromptOptions{}, e.fn());
    EXPECT_EQ(texts_of(p),
              (std::vector<std::string>{"a photo of red car", "a photo of cat", "a photo of dog", "a photo of blurry"}));
    EXPECT_EQ(p.query().term, "red car");
    EXPECT_EQ(p.label_count(), 2u);
    EXPECT_EQ(p.quality_count(), 1u);
    EXPECT_EQ(p.first_quality(), 3u);
    EXPECT_EQ(p.quality_info()[0].term, "blurry");
    ASSERT_EQ(e.calls.size(), 1u);  // one batch
    EXPECT_EQ(p.embeddings()[2], e.vec("a photo of dog"));
}

TEST(AssemblePromptSet, DuplicatesAfterTemplateAreDropped) {
    FakeEmbedder e;
    const std::vector<std::string> labels{"dog", "cat", "dog", "car"};
    const std::vector<std::string> quality{"blurry", "cat"};
    const auto p = assemble_prompt_set("car", labels, quality, PromptOptions{}, e.fn());
    EXPECT_EQ(texts_of(p),
              (std::vector<std::string>{"a photo of car", "a photo of dog", "a photo of cat", "a photo of blurry"}));
    EXPECT_EQ(p.label_count(), 2u);
    EXPECT_EQ(p.quality_count(), 1u);
}

TEST(AssemblePromptSet, PerGroupTemplateToggles) {
    FakeEmbedder e;
    PromptOptions opts;
    opts.template_quality = false;
    opts.template_query = false;
    const std::vector<std::string> labels{"dog"};
    const std::vector<std::string> quality{"blurry"};
    const auto p = assemble_prompt_set("dog", labels, quality, opts, e.fn());
    EXPECT_EQ(texts_of(p), (std::vector<std::string>{"dog", "a photo of dog", "blurry"}));
}

TEST(AssemblePromptSet, EmbeddingQueryIsNeverDeduplicated) {
    FakeEmbedder e;
    const auto q = e.vec("a photo of dog");
    const std::vector<std::string> labels{"dog"};
    const auto p = assemble_prompt_set(q, labels, {}, PromptOptions{}, e.fn());
    EXPECT_EQ(p.size(), 2u);
    EXPECT_EQ(p.query_embedding(), q);
    EXPECT_EQ(p.query().text, "");
    ASSERT_EQ(e.calls.size(), 1u);
    EXPECT_EQ(e.calls[0], (std::vector<std::string>{"a photo of dog"}));
}

TEST(AssemblePromptSet, EmbeddingQueryAloneNeedsNoEmbedder) {
    FakeEmbedder e;
    const auto p = assemble_prompt_set(e.vec("x"), {}, {}, PromptOptions{}, BatchEmbedFn{});
    EXPECT_EQ(p.size(), 1u);
}

TEST(AssemblePromptSet, Errors) {
    FakeEmbedder e;
    EXPECT_EQ(ZELDA_ERROR_CODE(assemble_prompt_set("   ", {}, {}, PromptOptions{}, e.fn())), ErrorCode::kEmptyQuery);
    EXPECT_EQ(ZELDA_ERROR_CODE(assemble_prompt_set("dog", {}, {}, PromptOptions{}, BatchEmbedFn{})),
              ErrorCode::kEmbedderUnavailable);
    BatchEmbedFn short_reply = [](const std::vector<std::string>&) { return std::vector<EmbeddingVector>{}; };
    EXPECT_EQ(ZELDA_ERROR_CODE(assemble_prompt_set("dog", {}, {}, PromptOptions{}, short_reply)),
              ErrorCode::kEmbedderUnavailable);
    FakeEmbedder wide;
    wide.dim = 4;
    const std::vector<std::string> labels{"cat"};
    EXPECT_EQ(ZELDA_ERROR_CODE(assemble_prompt_set(wide.vec("q"), labels, {}, PromptOptions{}, e.fn())),
              ErrorCode::kDimensionMismatch);
}

TEST(LabelSet, SkipsCommentsAndBlanks) {
    TempDir dir("labels");
    spit(dir / "l.txt", "# header\n dog \n\ncat\n#skip\n  \ncar\r\n");
    EXPECT_EQ(load_label_set(dir / "l.txt"), (std::vector<std::string>{"dog", "cat", "car"}));
    EXPECT_EQ(ZELDA_ERROR_CODE(load_label_set(dir / "missing.txt")), ErrorCode::kIoError);
}

TEST(LabelSet, BundledLvisList) {
    const auto labels = load_label_set(default_label_set_path());
    EXPECT_EQ(labels.size(), 1203u);
    EXPECT_EQ(labels.front(), "aerosol can/spray can");
    const std::set<std::string> unique(labels.begin(), labels.end());
    EXPECT_EQ(unique.size(), labels.size());
}

TEST(QualityTerms, Defaults) {
    EXPECT_EQ(default_quality_terms(), (std::vector<std::string>{"blurry", "grainy", "low resolution", "foggy", "sepia"}));
}

TEST(PromptCache, SaveLoadRoundTrip) {
    TempDir dir("cache");
    FakeEmbedder e;
    PromptCache cache;
    cache.insert("a photo of dog", e.vec("dog"));
    cache.insert("a photo of \"quoted\" cat", e.vec("cat"));
    cache.save(dir / "p.zea", dir / "p.jsonl", "m");
    const auto back = PromptCache::load(dir / "p.zea", dir / "p.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(*back.find("a photo of dog"), e.vec("dog"));
    EXPECT_EQ(*back.find("a photo of \"quoted\" cat"), e.vec("cat"));
    EXPECT_EQ(back.find("nope"), nullptr);
}

TEST(PromptCache, InsertReplacesAndChecksDim) {
    FakeEmbedder e;
    PromptCache cache;
    cache.insert("t", e.vec("a"));
    cache.insert("t", e.vec("b"));
    EXPECT_EQ(cache.size(), 1u);
    EXPECT_EQ(*cache.find("t"), e.vec("b"));
    FakeEmbedder wide;
    wide.dim = 3;
    EXPECT_EQ(ZELDA_ERROR_CODE(cache.insert("u", wide.vec("u"))), ErrorCode::kDimensionMismatch);
}

TEST(PromptCache, TextsArchiveMismatch) {
    TempDir dir("cachebad");
    FakeEmbedder e;
    PromptCache cache;
    cache.insert("a", e.vec("a"));
    cache.insert("b", e.vec("b"));
    cache.save(dir / "p.zea", dir / "p.jsonl", "m");
    spit(dir / "p.jsonl", "{\"text\":\"a\"}\n");
    EXPECT_EQ(ZELDA_ERROR_CODE(PromptCache::load(dir / "p.zea", dir / "p.jsonl")), ErrorCode::kMetadataMismatch);
}

TEST(CachedEmbedder, HitsSkipFallbackAndMissesBatch) {
    FakeEmbedder cache_src;
    PromptCache cache;
    cache.insert("x", cache_src.vec("cached-x"));
    FakeEmbedder live;
    const auto embed = make_cached_embedder(&cache, live.fn());
    const auto out = embed({"y", "x", "z"});
    EXPECT_EQ(out[1], cache_src.vec("cached-x"));
    EXPECT_EQ(out[0], live.vec("y"));
    EXPECT_EQ(out[2], live.vec("z"));
    ASSERT_EQ(live.calls.size(), 1u);
    EXPECT_EQ(live.calls[0], (std::vector<std::string>{"y", "z"}));

    live.calls.clear();
    embed({"x"});
    EXPECT_TRUE(live.calls.empty());
}

TEST(CachedEmbedder, MissWithoutFallbackIsUnavailable) {
    PromptCache cache;
    const auto embed = make_cached_embedder(&cache, {});
    EXPECT_EQ(ZELDA_ERROR_CODE(embed({"x"})), ErrorCode::kEmbedderUnavailable);
    const auto none = make_cached_embedder(nullptr, {});
    EXPECT_EQ(ZELDA_ERROR_CODE(none({"x"})), ErrorCode::kEmbedderUnavailable);
    EXPECT_TRUE(none({}).empty());
}
