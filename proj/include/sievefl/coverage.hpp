#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sievefl/corpus.hpp"

namespace sievefl {

struct CoverageCounters {
    std::uint64_t branch_covered = 0;
    std::uint64_t branch_missed = 0;
    std::uint64_t line_covered = 0;
    std::uint64_t line_missed = 0;
    std::uint64_t instruction_covered = 0;
    std::uint64_t instruction_missed = 0;

    bool operator==(const CoverageCounters&) const = default;
};

/// One <method> element of a JaCoCo report.
struct CoverageEntry {
    std::string class_name;  // dotted binary name, e.g. "com.shop.Cart$Line"
    std::string method_name; // "<init>" for constructors, as JaCoCo writes it
    std::string descriptor;  // JVM descriptor, e.g. "(IJ)V"
    std::size_t arity = 0;
    std::size_t line = 0;    // first line attribute, 0 when absent
    CoverageCounters counters;
};

struct CoverageReport {
    std::vector<CoverageEntry> methods;  // document order
    std::string source_report_path;
};

/// Number of parameters in a JVM method descriptor. Throws ParseError on a
/// malformed descriptor.
std::size_t descriptor_arity(std::string_view descriptor);

/// Reads a JaCoCo XML report. Missing file -> CoverageUnavailable; malformed
/// XML -> ParseError carrying the line number.
CoverageReport parse_coverage(const std::filesystem::path& xml_path);
CoverageReport parse_coverage_xml(std::string_view xml, std::string source_name = "<memory>");

/// rho(m): covered / total branches; branch-free methods score 1 if any line
/// or instruction ran, else 0.
double branch_ratio(const CoverageCounters& counters);

struct RhoMatch {
    std::string descriptor;
    double rho = 0.0;

    bool operator==(const RhoMatch&) const = default;
};

/// Every report entry with the key's (class, name, arity), in report order.
/// Empty means the method never appears in the report.
std::vector<RhoMatch> lookup_rho(const CoverageReport& report, const MethodKey& key);

/// Key used to join a source method against the report: constructors are
/// named "<init>" and static initializers "<clinit>" by JaCoCo.
MethodKey coverage_join_key(const MethodDocument& doc);

}  // namespace sievefl
