#include "sievefl/response_parsing.hpp"

#include "sievefl/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <regex>

namespace sievefl {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

bool is_markup(char c) { return c == '*' || c == '_' || c == '#' || c == '>' || c == '`'; }

std::string strip_markup_prefix(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (is_markup(s[i]) || std::isspace(static_cast<unsigned char>(s[i])))) ++i;
    return std::string(s.substr(i));
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

struct SectionLabel {
    int section;
    std::string_view phrase;
};

constexpr std::array<SectionLabel, 8> kSectionLabels{{
    {1, "expected behavior"},
    {1, "expected behaviour"},
    {2, "actual observed failure"},
    {2, "observed failure"},
    {2, "actual failure"},
    {2, "observed error"},
    {3, "search query"},
    {3, "search-oriented summary"},
}};

// Removes a leading section label ("**Search query:**") from a section body.
std::string strip_label(std::string_view text) {
    std::string rest = strip_markup_prefix(text);
    const std::string low = lower(rest);
    for (const auto& l : kSectionLabels) {
        if (low.rfind(l.phrase, 0) == 0) {
            std::size_t i = l.phrase.size();
            while (i < rest.size() && (is_markup(rest[i]) || rest[i] == ':' || rest[i] == '-' ||
                                       std::isspace(static_cast<unsigned char>(rest[i])))) {
                ++i;
            }
            return rest.substr(i);
        }
    }
    return rest;
}

struct SectionStart {
    int section;
    std::string remainder;  // text after the marker on the same line
};

std::optional<SectionStart> section_start(std::string_view line, int current) {
    const std::string s = strip_markup_prefix(line);
    if (s.size() >= 2 && s[0] >= '1' && s[0] <= '3' && (s[1] == '.' || s[1] == ')')) {
        const int n = s[0] - '0';
        if (n == current + 1) return SectionStart{n, strip_label(std::string_view(s).substr(2))};
    }
    const std::string low = lower(s);
    for (const auto& l : kSectionLabels) {
        if (l.section > current && low.rfind(l.phrase, 0) == 0) {
            return SectionStart{l.section, strip_label(s)};
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Stage 5
// ---------------------------------------------------------------------------

bool ident_like(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

// Earliest boundary-respecting occurrence of `needle` in [from, to), or npos.
std::size_t find_mention(std::string_view text, std::string_view needle, std::size_t from,
                         std::size_t to) {
    if (needle.empty()) return std::string_view::npos;
    std::size_t pos = text.find(needle, from);
    while (pos != std::string_view::npos && pos + needle.size() <= to) {
        const bool left_ok = pos == 0 || !(ident_like(text[pos - 1]) || text[pos - 1] == '.' ||
                                           text[pos - 1] == '#');
        const std::size_t end = pos + needle.size();
        const bool right_ok = end >= text.size() || !ident_like(text[end]) || !ident_like(needle.back());
        if (left_ok && right_ok) return pos;
        pos = text.find(needle, pos + 1);
    }
    return std::string_view::npos;
}

// Candidate (index) mentioned earliest in [from, to), or npos.
std::size_t earliest_candidate(std::string_view text, std::size_t from, std::size_t to,
                               const std::vector<std::vector<std::string>>& names,
                               std::size_t* where = nullptr) {
    std::size_t best = std::string_view::npos;
    std::size_t best_pos = std::string_view::npos;
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (const auto& n : names[i]) {
            const auto p = find_mention(text, n, from, to);
            if (p != std::string_view::npos && (best_pos == std::string_view::npos || p < best_pos)) {
                best = i;
                best_pos = p;
            }
        }
    }
    if (where) *where = best_pos;
    return best;
}

}  // namespace

FailureDescription parse_failure_description(std::string_view response) {
    const std::string whole = trim(response);
    if (whole.empty()) throw ParseError("empty failure-analysis reply");

    std::array<std::string, 4> sections;
    int current = 0;
    for (const auto line : split_lines(whole)) {
        if (auto start = section_start(line, current)) {
            current = start->section;
            sections[static_cast<std::size_t>(current)] = start->remainder;
            continue;
        }
        if (current == 0) continue;
        auto& body = sections[static_cast<std::size_t>(current)];
        if (!body.empty()) body += '\n';
        body += line;
    }

    FailureDescription d;
    d.expected_behavior = trim(sections[1]);
    d.observed_failure = trim(sections[2]);
    d.search_query = trim(sections[3]);
    if (d.search_query.empty()) {
        d = FailureDescription{};
        d.search_query = whole;
        d.degraded = true;
    }
    return d;
}

ScreeningVerdict parse_verdict(std::string_view response) {
    const auto lines = split_lines(response);
    std::optional<std::size_t> verdict_line;
    std::optional<bool> suspicious;

    for (std::size_t i = 0; i < lines.size() && !suspicious; ++i) {
        std::string low = lower(lines[i]);
        std::erase_if(low, [](char c) { return c == '*' || c == '_'; });
        const auto v = low.find("verdict");
        if (v == std::string::npos) continue;
        std::string tail = low.substr(v + 7);
        // "Verdict:" on its own line, answer on the next non-empty one
        if (tail.find("suspicious") == std::string::npos) {
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                if (trim(lines[j]).empty()) continue;
                std::string next = lower(lines[j]);
                std::erase_if(next, [](char c) { return c == '*' || c == '_'; });
                if (next.find("suspicious") != std::string::npos) {
                    tail = next;
                    i = j;
                }
                break;
            }
        }
        if (tail.find("suspicious") == std::string::npos) continue;
        static const std::regex negated(R"((not|non)[\s-]*suspicious|unsuspicious)");
        suspicious = !std::regex_search(tail, negated);
        verdict_line = i;
    }
    if (!suspicious) throw VerdictUnparseable("no verdict in screening reply");

    std::string justification;
    const std::string low_all = lower(response);
    const auto j = low_all.find("justification");
    if (j != std::string::npos) {
        std::size_t k = j + std::string_view("justification").size();
        while (k < response.size() && (is_markup(response[k]) || response[k] == ':' ||
                                       std::isspace(static_cast<unsigned char>(response[k])))) {
            ++k;
        }
        justification = trim(response.substr(std::min(k, response.size())));
    }
    if (justification.empty()) {
        std::string rest;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i == *verdict_line) continue;
            rest += lines[i];
            rest += '\n';
        }
        justification = trim(rest);
    }
    if (justification.empty()) justification = trim(response);
    return {*suspicious, justification};
}

std::vector<std::string> parse_ranking(std::string_view response,
                                       const std::vector<std::string>& expected_ids,
                                       const std::vector<std::vector<std::string>>& aliases) {
    if (expected_ids.empty()) throw ContractViolation("parse_ranking: expected_ids is empty");

    std::vector<std::vector<std::string>> names(expected_ids.size());
    for (std::size_t i = 0; i < expected_ids.size(); ++i) {
        names[i].push_back(expected_ids[i]);
        if (i < aliases.size()) {
            names[i].insert(names[i].end(), aliases[i].begin(), aliases[i].end());
        }
    }
    // longer names first so "Foo.bar(int, int)" is not shadowed by a shorter alias
    for (auto& n : names) {
        std::sort(n.begin(), n.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    }

    std::vector<std::size_t> order;
    std::vector<bool> taken(expected_ids.size(), false);
    auto take = [&](std::size_t i) {
        if (i != std::string_view::npos && !taken[i]) {
            taken[i] = true;
            order.push_back(i);
        }
    };

    // numbered items: "1. X", "2) Y", possibly several on one line
    static const std::regex item(R"((^|\s)(\d{1,3})[.)]\s)");
    std::vector<std::size_t> item_starts;
    const std::string text(response);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), item); it != std::sregex_iterator(); ++it) {
        item_starts.push_back(static_cast<std::size_t>(it->position(2)));
    }
    for (std::size_t k = 0; k < item_starts.size(); ++k) {
        const std::size_t end = k + 1 < item_starts.size() ? item_starts[k + 1] : text.size();
        take(earliest_candidate(text, item_starts[k], end, names));
    }

    if (order.empty()) {
        // no numbered items: order of first mention
        std::size_t from = 0;
        for (;;) {
            std::size_t where = 0;
            std::vector<std::vector<std::string>> remaining(names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                if (!taken[i]) remaining[i] = names[i];
            }
            const auto i = earliest_candidate(text, from, text.size(), remaining, &where);
            if (i == std::string_view::npos) break;
            take(i);
            from = where;
        }
    }
    if (order.empty()) throw RankingUnparseable("re-ranking reply names none of the suspects");

    for (std::size_t i = 0; i < expected_ids.size(); ++i) take(i);
    std::vector<std::string> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(expected_ids[i]);
    return out;
}

}  // namespace sievefl
