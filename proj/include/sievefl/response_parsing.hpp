#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sievefl/failure.hpp"

namespace sievefl {

struct ScreeningVerdict {
    bool suspicious = false;
    std::string justification;

    bool operator==(const ScreeningVerdict&) const = default;
};

/// Splits a Stage-1 reply into its three numbered (or headed) sections.
/// When no search-query section can be found the whole reply becomes the
/// query and `degraded` is set. Throws ParseError on an empty reply.
FailureDescription parse_failure_description(std::string_view response);

/// Finds the "Verdict: ..." line (case-insensitive). "Not Suspicious" wins
/// over "Suspicious" on that line. Throws VerdictUnparseable when there is
/// no verdict.
ScreeningVerdict parse_verdict(std::string_view response);

/// Orders `expected_ids` as the reply ranks them. Each id may carry extra
/// aliases (labels shown to the model). Numbered items are read in order,
/// taking the earliest candidate named in each item; without numbered items
/// the order of first mention is used. Duplicates keep their first
/// position and unmentioned ids are appended in input order, so the result
/// is always a permutation of `expected_ids`. Throws RankingUnparseable when
/// no candidate is mentioned at all.
std::vector<std::string> parse_ranking(std::string_view response,
                                       const std::vector<std::string>& expected_ids,
                                       const std::vector<std::vector<std::string>>& aliases = {});

}  // namespace sievefl
