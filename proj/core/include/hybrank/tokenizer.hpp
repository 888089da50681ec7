#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hybrank {

/// Bumped whenever tokenization output can change; persisted in index files.
inline constexpr std::uint32_t kTokenizerVersion = 1;

/// Lowercases and splits on maximal runs of Unicode alphanumerics. Invalid UTF-8
/// bytes act as separators. Terms in `stopwords` are dropped.
class Tokenizer {
public:
    Tokenizer() = default;
    explicit Tokenizer(std::set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}

    std::vector<std::string> operator()(std::string_view text) const;

    const std::set<std::string>& stopwords() const noexcept { return stopwords_; }

private:
    std::set<std::string> stopwords_;
};

/// Tokenizes with the default (no-stopword) tokenizer.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace hybrank
