#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace lexcascade::testing {

namespace fs = std::filesystem;

TempDir::TempDir()
{
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lexcascade-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

WarningCapture::WarningCapture()
{
    previous_ = set_warning_sink([this](std::string_view m) { messages_.emplace_back(m); });
}

WarningCapture::~WarningCapture()
{
    set_warning_sink(previous_);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

namespace {

std::string word(const char* prefix, std::size_t i)
{
    return prefix + std::to_string(i);
}

}  // namespace

Fixture make_fixture(std::size_t n_articles, std::size_t n_queries, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    constexpr std::size_t kTopicSize = 10;
    constexpr std::size_t kTopicWords = 25;
    constexpr std::size_t kCommonWords = 40;
    constexpr std::size_t kOwnWords = 6;

    Fixture f;
    std::vector<std::vector<std::string>> own(n_articles);
    for (std::size_t a = 0; a < n_articles; ++a) {
        const std::size_t topic = a / kTopicSize;
        for (std::size_t i = 0; i < kOwnWords; ++i) {
            own[a].push_back(word("own", a * kOwnWords + i));
        }
        std::vector<std::string> words;
        const std::size_t length = 20 + pick(30);
        for (std::size_t i = 0; i < length; ++i) {
            const auto roll = pick(10);
            if (roll < 4) {
                words.push_back(word("common", pick(kCommonWords)));
            } else if (roll < 7) {
                words.push_back(word("topic", topic * kTopicWords + pick(kTopicWords)));
            } else {
                words.push_back(own[a][pick(kOwnWords)]);
            }
        }
        std::string text;
        for (const auto& w : words) {
            text += (text.empty() ? "" : " ") + w;
        }
        text += ".";
        f.articles.push_back({"Article " + std::to_string(a + 1), "Title " + std::to_string(topic), text});
    }

    const std::size_t topics = (n_articles + kTopicSize - 1) / kTopicSize;
    for (std::size_t q = 0; q < n_queries; ++q) {
        const std::size_t topic = pick(topics);
        const std::size_t first = topic * kTopicSize;
        const std::size_t members = std::min(kTopicSize, n_articles - first);
        const std::size_t n_rel = 1 + pick(std::min<std::size_t>(3, members));
        std::set<std::size_t> rel;
        while (rel.size() < n_rel) {
            rel.insert(first + pick(members));
        }
        std::vector<std::string> words;
        for (const auto a : rel) {
            for (int i = 0; i < 3; ++i) {
                words.push_back(own[a][pick(kOwnWords)]);
            }
        }
        for (int i = 0; i < 3; ++i) {
            words.push_back(word("topic", topic * kTopicWords + pick(kTopicWords)));
            words.push_back(word("common", pick(kCommonWords)));
        }
        std::shuffle(words.begin(), words.end(), rng);
        std::string text;
        for (const auto& w : words) {
            text += (text.empty() ? "" : " ") + w;
        }
        text += "?";
        Query query;
        query.id = "Q" + std::to_string(q + 1);
        query.text = text;
        query.labeled = true;
        for (const auto a : rel) {
            query.relevant_ids.insert(f.articles[a].id);
        }
        f.queries.push_back(std::move(query));
    }
    return f;
}

}  // namespace lexcascade::testing
