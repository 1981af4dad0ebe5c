#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <geomq/topic.hpp>

using namespace geomq;

namespace {

// Reference matcher, written recursively against the documented rules rather
// than the library's iterative loop, so the two can disagree.
bool refMatch(const std::vector<std::string>& filter, size_t fi, const std::vector<std::string>& topic,
              size_t ti) {
    if (fi == filter.size()) return ti == topic.size();
    if (filter[fi] == "#") return true;
    if (ti == topic.size()) return false;
    if (filter[fi] == "+" || filter[fi] == topic[ti]) return refMatch(filter, fi + 1, topic, ti + 1);
    return false;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t slash = text.find('/', start);
        if (slash == std::string::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, slash - start));
        start = slash + 1;
    }
}

}  // namespace

TEST_CASE("topic names reject empty and wildcard levels") {
    CHECK_NOTHROW(Topic("a"));
    CHECK_NOTHROW(Topic("a/b/c"));
    CHECK_NOTHROW(Topic("data"));
    CHECK_THROWS_AS(Topic(""), std::invalid_argument);
    CHECK_THROWS_AS(Topic("a//b"), std::invalid_argument);
    CHECK_THROWS_AS(Topic("/a"), std::invalid_argument);
    CHECK_THROWS_AS(Topic("a/"), std::invalid_argument);
    CHECK_THROWS_AS(Topic("a/+/b"), std::invalid_argument);
    CHECK_THROWS_AS(Topic("a/#"), std::invalid_argument);
    CHECK_THROWS_AS(Topic("a+b"), std::invalid_argument);
}

TEST_CASE("filters accept wildcards but only a terminal hash") {
    CHECK_NOTHROW(TopicFilter("+"));
    CHECK_NOTHROW(TopicFilter("#"));
    CHECK_NOTHROW(TopicFilter("a/+/b"));
    CHECK_NOTHROW(TopicFilter("a/#"));
    CHECK_NOTHROW(TopicFilter("+/+/#"));
    CHECK_THROWS_AS(TopicFilter(""), std::invalid_argument);
    CHECK_THROWS_AS(TopicFilter("#/a"), std::invalid_argument);
    CHECK_THROWS_AS(TopicFilter("a/#/b"), std::invalid_argument);
    CHECK_THROWS_AS(TopicFilter("a//b"), std::invalid_argument);
    CHECK_THROWS_AS(TopicFilter("a+b"), std::invalid_argument);
    CHECK_THROWS_AS(TopicFilter("a#"), std::invalid_argument);
}

TEST_CASE("exact filters match only their own topic") {
    const TopicFilter f("a/b");
    CHECK(f.matches(Topic("a/b")));
    CHECK_FALSE(f.matches(Topic("a")));
    CHECK_FALSE(f.matches(Topic("a/c")));
    CHECK_FALSE(f.matches(Topic("a/b/c")));
}

TEST_CASE("hash matches the parent level and every deeper one") {
    const TopicFilter f("images/#");
    CHECK(f.matches(Topic("images")));
    CHECK(f.matches(Topic("images/a")));
    CHECK(f.matches(Topic("images/a/b")));
    CHECK_FALSE(f.matches(Topic("image")));
    CHECK_FALSE(f.matches(Topic("video/a")));

    const TopicFilter root("#");
    CHECK(root.matches(Topic("a")));
    CHECK(root.matches(Topic("a/b/c/d")));
}

TEST_CASE("plus matches exactly one level") {
    const TopicFilter f("+/temperature");
    CHECK(f.matches(Topic("kitchen/temperature")));
    CHECK(f.matches(Topic("attic/temperature")));
    CHECK_FALSE(f.matches(Topic("temperature")));
    CHECK_FALSE(f.matches(Topic("a/b/temperature")));

    const TopicFilter single("a/+");
    CHECK(single.matches(Topic("a/x")));
    CHECK_FALSE(single.matches(Topic("a")));
    CHECK_FALSE(single.matches(Topic("a/x/y")));
}

TEST_CASE("mixed wildcards compose") {
    const TopicFilter f("a/+/#");
    CHECK(f.matches(Topic("a/b")));
    CHECK(f.matches(Topic("a/b/c")));
    CHECK(f.matches(Topic("a/b/c/d")));
    CHECK_FALSE(f.matches(Topic("a")));
    CHECK_FALSE(f.matches(Topic("b/b/c")));
}

TEST_CASE("fuzz against the reference matcher") {
    std::mt19937 rng(417);
    const std::vector<std::string> names{"a", "b", "c"};
    std::uniform_int_distribution<int> levelCount(1, 4);
    std::uniform_int_distribution<size_t> pickName(0, names.size() - 1);
    std::uniform_int_distribution<int> pct(0, 99);

    size_t matched = 0;
    for (int iter = 0; iter < 20000; ++iter) {
        std::string topicText;
        const int tLevels = levelCount(rng);
        for (int i = 0; i < tLevels; ++i) {
            if (i) topicText += '/';
            topicText += names[pickName(rng)];
        }

        std::string filterText;
        const int fLevels = levelCount(rng);
        for (int i = 0; i < fLevels; ++i) {
            if (i) filterText += '/';
            if (i == fLevels - 1 && pct(rng) < 25) {
                filterText += '#';
            } else if (pct(rng) < 25) {
                filterText += '+';
            } else {
                filterText += names[pickName(rng)];
            }
        }

        const bool got = TopicFilter(filterText).matches(Topic(topicText));
        const bool want = refMatch(split(filterText), 0, split(topicText), 0);
        if (got != want) {
            CAPTURE(filterText, topicText, got, want);
            REQUIRE(got == want);
        }
        if (got) ++matched;
    }
    // Both outcomes must actually occur for the fuzz to mean anything.
    CHECK(matched > 1000);
    CHECK(matched < 19000);
}
