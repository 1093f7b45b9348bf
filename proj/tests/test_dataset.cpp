#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mvr/dataset.hpp"

using namespace mvr;

TEST_CASE("loads a valid record line") {
    std::string line =
        R"({"id":"zh-0","statement":"右图有青绿色的苹果","language":"zh","left_image":"a.jpg","right_image":"b.jpg","label":"false"})";
    Dataset d = parse_dataset(line + "\n", "<test>");
    REQUIRE(d.examples.size() == 1);
    CHECK(d.examples[0].id == "zh-0");
    CHECK(d.examples[0].statement == "右图有青绿色的苹果");
    CHECK(d.examples[0].gold_label == false);
    CHECK(d.language_histogram.at("zh") == 1);
}

TEST_CASE("empty file yields empty dataset") {
    Dataset d = parse_dataset("", "<test>");
    CHECK(d.examples.empty());
    CHECK(d.language_histogram.empty());
}

TEST_CASE("duplicate ids abort the load") {
    std::string line =
        R"({"id":"x","statement":"s","language":"en","left_image":"a","right_image":"b","label":"true"})";
    try {
        parse_dataset(line + "\n" + line + "\n", "<test>");
        FAIL("expected DuplicateId");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::DuplicateId);
        CHECK(e.line == 2);
    }
}

TEST_CASE("normalize_label") {
    CHECK(normalize_label("True") == true);
    CHECK(normalize_label("true") == true);
    CHECK(normalize_label("1") == true);
    CHECK(normalize_label("0") == false);
    CHECK(normalize_label("False") == false);
    CHECK_THROWS_AS(normalize_label("maybe"), DatasetError);
}

TEST_CASE("missing field names the line") {
    std::string good1 =
        R"({"id":"a","statement":"s","language":"en","left_image":"l","right_image":"r","label":"true"})";
    std::string good2 =
        R"({"id":"b","statement":"s","language":"en","left_image":"l","right_image":"r","label":"true"})";
    std::string bad = R"({"id":"c","language":"en","left_image":"l","right_image":"r","label":"true"})";
    try {
        parse_dataset(good1 + "\n" + good2 + "\n" + bad + "\n", "<test>");
        FAIL("expected MissingField");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::MissingField);
        CHECK(e.line == 3);
    }
}

TEST_CASE("language mismatch and unknown language") {
    std::string line =
        R"({"id":"a","statement":"s","language":"tr","left_image":"l","right_image":"r","label":"true"})";
    CHECK_THROWS_AS(parse_dataset(line, "<test>", std::string("en")), DatasetError);
    std::string unknown =
        R"({"id":"a","statement":"s","language":"xx","left_image":"l","right_image":"r","label":"true"})";
    CHECK_THROWS_AS(parse_dataset(unknown, "<test>"), DatasetError);
    // extensible language set via config
    std::set<std::string> extended = default_languages();
    extended.insert("xx");
    CHECK_NOTHROW(parse_dataset(unknown, "<test>", {}, extended));
}

TEST_CASE("bad label values") {
    std::string line =
        R"({"id":"a","statement":"s","language":"en","left_image":"l","right_image":"r","label":"perhaps"})";
    try {
        parse_dataset(line, "<test>");
        FAIL("expected BadLabel");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::BadLabel);
        CHECK(e.line == 1);
    }
}

TEST_CASE("boolean and integer label encodings") {
    std::string a =
        R"({"id":"a","statement":"s","language":"en","left_image":"l","right_image":"r","label":true})";
    std::string b =
        R"({"id":"b","statement":"s","language":"en","left_image":"l","right_image":"r","label":0})";
    Dataset d = parse_dataset(a + "\n" + b + "\n", "<test>");
    CHECK(d.examples[0].gold_label == true);
    CHECK(d.examples[1].gold_label == false);
}

static Dataset random_dataset(std::mt19937& rng, int n) {
    const std::vector<std::string> langs = {"en", "id", "sw", "ta", "tr", "zh"};
    Dataset d;
    d.source_path = "<random>";
    for (int i = 0; i < n; ++i) {
        VisualReasoningExample ex;
        ex.id = "ex-" + std::to_string(i);
        int words = 1 + static_cast<int>(rng() % 12);
        for (int w = 0; w < words; ++w) ex.statement += (w ? " " : "") + std::string("w") + std::to_string(rng() % 50);
        ex.language = langs[rng() % langs.size()];
        ex.left_image = "img/" + ex.id + "-l.jpg";
        ex.right_image = "img/" + ex.id + "-r.jpg";
        ex.gold_label = rng() % 2 == 0;
        d.language_histogram[ex.language]++;
        d.examples.push_back(std::move(ex));
    }
    return d;
}

TEST_CASE("serialize/parse round trip") {
    std::mt19937 rng(7);
    for (int iter = 0; iter < 20; ++iter) {
        Dataset d = random_dataset(rng, 1 + static_cast<int>(rng() % 30));
        Dataset back = parse_dataset(serialize_dataset(d), "<random>");
        REQUIRE(back.examples.size() == d.examples.size());
        CHECK(back.examples == d.examples);
        CHECK(back.language_histogram == d.language_histogram);
    }
}

TEST_CASE("histogram counts sum to dataset size") {
    std::mt19937 rng(11);
    Dataset d = random_dataset(rng, 57);
    int total = 0;
    for (const auto& [lang, n] : d.language_histogram) {
        int count = 0;
        for (const auto& ex : d.examples)
            if (ex.language == lang) ++count;
        CHECK(count == n);
        total += n;
    }
    CHECK(total == static_cast<int>(d.examples.size()));
}
