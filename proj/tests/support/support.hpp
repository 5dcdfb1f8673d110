#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lexcascade/corpus.hpp"
#include "lexcascade/log.hpp"

namespace lexcascade::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

/// Collects warnings for its lifetime instead of printing them.
class WarningCapture {
  public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    [[nodiscard]] const std::vector<std::string>& messages() const noexcept { return messages_; }

  private:
    std::vector<std::string> messages_;
    WarningSink previous_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Synthetic statute-like collection. Articles belong to topics of ten and mix
/// common words, topic words and a few words of their own. Each query paraphrases
/// one to three articles of a single topic, which are its gold set.
struct Fixture {
    std::vector<Article> articles;
    std::vector<Query> queries;
};

Fixture make_fixture(std::size_t articles, std::size_t queries, std::uint64_t seed);

}  // namespace lexcascade::testing
