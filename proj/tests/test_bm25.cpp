#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lexcascade/bm25.hpp"
#include "lexcascade/error.hpp"
#include "support/support.hpp"

using namespace lexcascade;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> words)
{
    return {words.begin(), words.end()};
}

}  // namespace

TEST(Bm25Build, AverageLength)
{
    const auto index = Bm25Index::build(Corpus({{"a", "", "x y"}, {"b", "", "x y z w"}, {"c", "", "a b c d e f"}}));
    EXPECT_EQ(index.doc_count(), 3U);
    EXPECT_DOUBLE_EQ(index.avgdl(), 4.0);
    EXPECT_EQ(index.doc_length(2), 6U);
}

TEST(Bm25Build, ZeroAvgdl)
{
    try {
        (void)Bm25Index::build(Corpus({{"a", "", "... !!"}}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroAvgdl);
    }
}

TEST(Bm25Build, Deterministic)
{
    const auto f = lexcascade::testing::make_fixture(40, 0, 5);
    EXPECT_TRUE(Bm25Index::build(Corpus(f.articles)) == Bm25Index::build(Corpus(f.articles)));
}

TEST(Bm25Build, BadParams)
{
    EXPECT_THROW((void)Bm25Index::build(Corpus({{"a", "", "x"}}), {}, {-1.0, 0.5}), Error);
    EXPECT_THROW((void)Bm25Index::build(Corpus({{"a", "", "x"}}), {}, {1.2, 1.5}), Error);
}

TEST(Bm25Score, SingleDocument)
{
    const auto index = Bm25Index::build(Corpus({{"d", "", "law"}}));
    const auto q = toks({"law"});
    EXPECT_NEAR(index.score(q, "d"), std::log(4.0 / 3.0), 1e-15);
    EXPECT_NEAR(index.score(q, "d"), 0.28768, 1e-5);
    EXPECT_EQ(index.score(toks({"law", "law"}), "d"), index.score(q, "d"));
    EXPECT_EQ(index.score(toks({"contract"}), "d"), 0.0);
}

TEST(Bm25Score, UnknownDoc)
{
    const auto index = Bm25Index::build(Corpus({{"d", "", "law"}}));
    try {
        (void)index.score(toks({"law"}), "nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownDoc);
    }
}

TEST(Bm25Score, AdditiveOverDisjointTerms)
{
    const auto f = lexcascade::testing::make_fixture(30, 5, 11);
    const auto index = Bm25Index::build(Corpus(f.articles));
    for (const auto& q : f.queries) {
        const auto all = tokenize(q.text);
        std::vector<std::string> left(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2));
        std::vector<std::string> right;
        for (const auto& t : all) {
            if (std::find(left.begin(), left.end(), t) == left.end()) {
                right.push_back(t);
            }
        }
        for (const auto& a : f.articles) {
            const double whole = index.score(all, a.id);
            EXPECT_NEAR(whole, index.score(left, a.id) + index.score(right, a.id), 1e-12);
            EXPECT_GE(whole, 0.0);
        }
    }
}

TEST(Bm25TopK, OrderAndTies)
{
    const auto index = Bm25Index::build(Corpus({{"c", "", "law law contract"}, {"b", "", "tort"}, {"a", "", "tort"}}));
    EXPECT_TRUE(index.top_k(toks({"law"}), 0).empty());
    const auto top = index.top_k(toks({"tort"}), 2);
    ASSERT_EQ(top.size(), 2U);
    EXPECT_EQ(top[0].id, "a");
    EXPECT_EQ(top[1].id, "b");
    EXPECT_EQ(top[0].score, top[1].score);

    const auto law = index.top_k(toks({"law"}), 10);
    ASSERT_EQ(law.size(), 3U);
    EXPECT_EQ(law[0].id, "c");
    EXPECT_GT(law[0].score, 0.0);
    EXPECT_EQ(law[1].id, "a");  // zero scores filled in id order
    EXPECT_EQ(law[2].id, "b");
}

TEST(Bm25TopK, HandCorpus)
{
    // Three documents whose scores for "sale" decrease strictly and end at zero.
    const auto index =
        Bm25Index::build(Corpus({{"x", "", "sale sale sale buyer"}, {"y", "", "sale buyer seller lessee"}, {"z", "", "lessee rent"}}));
    const auto q = toks({"sale"});
    const auto top = index.top_k(q, 2);
    ASSERT_EQ(top.size(), 2U);
    EXPECT_EQ(top[0].id, "x");
    EXPECT_EQ(top[1].id, "y");
    EXPECT_GT(top[0].score, top[1].score);
    EXPECT_EQ(index.score(q, "z"), 0.0);
}

TEST(Bm25Recall, Examples)
{
    // "q" ranks d3 third: d1 and d2 contain the query term twice.
    const auto index =
        Bm25Index::build(Corpus({{"d1", "", "alpha alpha"}, {"d2", "", "alpha alpha beta"}, {"d3", "", "alpha gamma delta epsilon zeta"}, {"d4", "", "omega"}, {"d5", "", "psi"}}));
    const auto ranking = index.top_k(toks({"alpha"}), 5);
    ASSERT_EQ(ranking[2].id, "d3");
    const std::vector<Query> qs{{"q", "alpha", {"d3"}, std::nullopt, true}};
    const std::vector<std::size_t> ks{2, 5};
    const auto table = recall_at_k(index, qs, ks);
    EXPECT_EQ(table.at(2), 0.0);
    EXPECT_EQ(table.at(5), 1.0);

    const std::vector<Query> unlabeled{{"q", "alpha", {}, std::nullopt, false}};
    EXPECT_THROW((void)recall_at_k(index, unlabeled, ks), Error);
}

TEST(Bm25Index, SaveLoad)
{
    lexcascade::testing::TempDir dir;
    const auto f = lexcascade::testing::make_fixture(25, 0, 2);
    const auto index = Bm25Index::build(Corpus(f.articles), {true, false}, {1.5, 0.5});
    index.save((dir / "idx.json").string());
    const auto loaded = Bm25Index::load((dir / "idx.json").string());
    EXPECT_TRUE(loaded == index);
    EXPECT_EQ(loaded.tokenizer(), (TokenizerConfig{true, false}));
    EXPECT_EQ(loaded.params(), (Bm25Params{1.5, 0.5}));

    auto text = lexcascade::testing::read_file(dir / "idx.json");
    const auto pos = text.find("\"version\":1");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 11, "\"version\":9");
    lexcascade::testing::write_file(dir / "bad.json", text);
    try {
        (void)Bm25Index::load((dir / "bad.json").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndexFormat);
    }
}
