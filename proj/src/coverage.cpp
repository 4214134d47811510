#include "sievefl/coverage.hpp"

#include "sievefl/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace sievefl {

namespace pt = boost::property_tree;

namespace {

std::uint64_t parse_count(const std::string& text, const std::string& where) {
    if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit)) {
        throw ParseError(where + ": counter value '" + text + "' is not a non-negative integer");
    }
    return std::stoull(text);
}

std::string attr(const pt::ptree& node, const char* name) {
    return node.get<std::string>(std::string("<xmlattr>.") + name, "");
}

void read_counters(const pt::ptree& method, CoverageCounters& c, const std::string& where) {
    for (const auto& [tag, counter] : method) {
        if (tag != "counter") continue;
        const auto type = attr(counter, "type");
        const auto covered = parse_count(attr(counter, "covered"), where);
        const auto missed = parse_count(attr(counter, "missed"), where);
        if (type == "BRANCH") {
            c.branch_covered = covered;
            c.branch_missed = missed;
        } else if (type == "LINE") {
            c.line_covered = covered;
            c.line_missed = missed;
        } else if (type == "INSTRUCTION") {
            c.instruction_covered = covered;
            c.instruction_missed = missed;
        }
        // COMPLEXITY, METHOD, CLASS counters are not needed
    }
}

void read_class(const pt::ptree& cls, CoverageReport& report) {
    std::string class_name = attr(cls, "name");
    std::replace(class_name.begin(), class_name.end(), '/', '.');
    for (const auto& [tag, method] : cls) {
        if (tag != "method") continue;
        CoverageEntry e;
        e.class_name = class_name;
        e.method_name = attr(method, "name");
        e.descriptor = attr(method, "desc");
        const std::string where = report.source_report_path + ": " + class_name + "." + e.method_name;
        e.arity = descriptor_arity(e.descriptor);
        const auto line = attr(method, "line");
        e.line = line.empty() ? 0 : static_cast<std::size_t>(parse_count(line, where));
        read_counters(method, e.counters, where);
        report.methods.push_back(std::move(e));
    }
}

void read_container(const pt::ptree& node, CoverageReport& report) {
    for (const auto& [tag, child] : node) {
        if (tag == "group") {
            read_container(child, report);
        } else if (tag == "package") {
            for (const auto& [ptag, cls] : child) {
                if (ptag == "class") read_class(cls, report);
            }
        }
    }
}

}  // namespace

std::size_t descriptor_arity(std::string_view desc) {
    if (desc.empty() || desc.front() != '(') {
        throw ParseError("malformed method descriptor '" + std::string(desc) + "'");
    }
    std::size_t arity = 0;
    std::size_t i = 1;
    while (i < desc.size() && desc[i] != ')') {
        while (i < desc.size() && desc[i] == '[') ++i;
        if (i >= desc.size()) break;
        switch (desc[i]) {
            case 'B': case 'C': case 'D': case 'F': case 'I': case 'J': case 'S': case 'Z':
                ++i;
                break;
            case 'L': {
                const auto semi = desc.find(';', i);
                if (semi == std::string_view::npos) {
                    throw ParseError("malformed method descriptor '" + std::string(desc) + "'");
                }
                i = semi + 1;
                break;
            }
            default:
                throw ParseError("malformed method descriptor '" + std::string(desc) + "'");
        }
        ++arity;
    }
    if (i >= desc.size()) throw ParseError("malformed method descriptor '" + std::string(desc) + "'");
    return arity;
}

CoverageReport parse_coverage_xml(std::string_view xml, std::string source_name) {
    pt::ptree tree;
    std::istringstream in{std::string(xml)};
    try {
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError(source_name + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    const auto root = tree.get_child_optional("report");
    if (!root) throw ParseError(source_name + ": no <report> root element");

    CoverageReport report;
    report.source_report_path = std::move(source_name);
    read_container(*root, report);
    return report;
}

CoverageReport parse_coverage(const std::filesystem::path& xml_path) {
    std::ifstream in(xml_path, std::ios::binary);
    if (!in) throw CoverageUnavailable("coverage report not found: " + xml_path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_coverage_xml(buf.str(), xml_path.string());
}

double branch_ratio(const CoverageCounters& c) {
    const auto total = c.branch_covered + c.branch_missed;
    if (total > 0) return static_cast<double>(c.branch_covered) / static_cast<double>(total);
    return (c.line_covered + c.instruction_covered) > 0 ? 1.0 : 0.0;
}

std::vector<RhoMatch> lookup_rho(const CoverageReport& report, const MethodKey& key) {
    std::vector<RhoMatch> out;
    for (const auto& e : report.methods) {
        if (e.arity == key.arity && e.method_name == key.method_name &&
            e.class_name == key.class_name) {
            out.push_back({e.descriptor, branch_ratio(e.counters)});
        }
    }
    return out;
}

MethodKey coverage_join_key(const MethodDocument& doc) {
    MethodKey key = method_key(doc);
    if (is_constructor(doc)) key.method_name = "<init>";
    return key;
}

}  // namespace sievefl
