#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geomq {

namespace topic_detail {

inline std::vector<std::string> splitLevels(std::string_view text) {
    if (text.empty()) throw std::invalid_argument("empty topic string");
    std::vector<std::string> levels;
    size_t start = 0;
    while (true) {
        const size_t slash = text.find('/', start);
        const std::string_view level =
            slash == std::string_view::npos ? text.substr(start) : text.substr(start, slash - start);
        if (level.empty()) throw std::invalid_argument("empty topic level");
        levels.emplace_back(level);
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return levels;
}

inline void checkLiteralLevel(const std::string& level) {
    if (level.find_first_of("+#") != std::string::npos) {
        throw std::invalid_argument("wildcard character inside topic level: " + level);
    }
}

}  // namespace topic_detail

/// A topic name: one or more non-empty levels joined by '/'. Levels are
/// case-sensitive byte strings and may not contain '/', '+' or '#'.
class Topic {
public:
    explicit Topic(std::string_view text) : levels_(topic_detail::splitLevels(text)) {
        for (const auto& level : levels_) topic_detail::checkLiteralLevel(level);
    }

    const std::vector<std::string>& levels() const { return levels_; }

    std::string str() const {
        std::string out = levels_.front();
        for (size_t i = 1; i < levels_.size(); ++i) {
            out += '/';
            out += levels_[i];
        }
        return out;
    }

    bool operator==(const Topic&) const = default;

private:
    std::vector<std::string> levels_;
};

/// A topic filter: levels that are literals, "+" (exactly one level) or "#"
/// (the rest of the topic, terminal only).
class TopicFilter {
public:
    explicit TopicFilter(std::string_view text) : levels_(topic_detail::splitLevels(text)) {
        for (size_t i = 0; i < levels_.size(); ++i) {
            const std::string& level = levels_[i];
            if (level == "+") continue;
            if (level == "#") {
                if (i + 1 != levels_.size()) {
                    throw std::invalid_argument("'#' is only valid as the last filter level");
                }
                continue;
            }
            topic_detail::checkLiteralLevel(level);
        }
    }

    const std::vector<std::string>& levels() const { return levels_; }

    std::string str() const {
        std::string out = levels_.front();
        for (size_t i = 1; i < levels_.size(); ++i) {
            out += '/';
            out += levels_[i];
        }
        return out;
    }

    /// MQTT semantics: "+" matches exactly one level, a terminal "#" matches
    /// the remaining levels including none ("a/#" matches "a").
    bool matches(const Topic& topic) const {
        const auto& t = topic.levels();
        for (size_t i = 0; i < levels_.size(); ++i) {
            const std::string& f = levels_[i];
            if (f == "#") return true;
            if (i >= t.size()) return false;
            if (f == "+") continue;
            if (f != t[i]) return false;
        }
        return levels_.size() == t.size();
    }

    bool operator==(const TopicFilter&) const = default;

private:
    std::vector<std::string> levels_;
};

inline Topic parseTopic(std::string_view text) { return Topic(text); }
inline TopicFilter parseFilter(std::string_view text) { return TopicFilter(text); }

inline bool matches(const TopicFilter& filter, const Topic& topic) { return filter.matches(topic); }

}  // namespace geomq
