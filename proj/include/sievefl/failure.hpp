#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace sievefl {

/// Raw artifacts of one failing bug.
struct FailureContext {
    std::string bug_id;
    std::string failing_test_code;
    std::string error_output;
    std::optional<std::filesystem::path> coverage_xml_path;
};

/// Stage-1 analysis of a failure. `search_query` drives retrieval.
struct FailureDescription {
    std::string expected_behavior;
    std::string observed_failure;
    std::string search_query;
    bool degraded = false;

    /// Text substituted for {failure_description} in later prompts.
    std::string prose() const;

    bool operator==(const FailureDescription&) const = default;
};

/// Per-bug input bundle directory:
///   failing_test.java   source of the failing test method(s)
///   error_output.txt    exception / stack trace / assertion text
///   coverage.xml        optional JaCoCo report of the failing test only
/// The bug id is the directory name. Throws InputError when a required file
/// is missing or empty.
FailureContext load_bug_bundle(const std::filesystem::path& dir);

}  // namespace sievefl
