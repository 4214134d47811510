#include "sievefl/failure.hpp"

#include "sievefl/errors.hpp"

#include <fstream>
#include <sstream>

namespace sievefl {

namespace fs = std::filesystem;

std::string FailureDescription::prose() const {
    if (degraded || (expected_behavior.empty() && observed_failure.empty())) return search_query;
    std::string out;
    if (!expected_behavior.empty()) out += "Expected behavior: " + expected_behavior + "\n";
    if (!observed_failure.empty()) out += "Observed failure: " + observed_failure + "\n";
    out += "Likely faulty functionality: " + search_query;
    return out;
}

namespace {

std::string read_required(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("missing bundle file " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw InputError("bundle file " + p.string() + " is empty");
    }
    return text;
}

}  // namespace

FailureContext load_bug_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InputError("bug bundle '" + dir.string() + "' is not a directory");
    FailureContext ctx;
    ctx.bug_id = dir.filename().string();
    ctx.failing_test_code = read_required(dir / "failing_test.java");
    ctx.error_output = read_required(dir / "error_output.txt");
    if (fs::exists(dir / "coverage.xml")) ctx.coverage_xml_path = dir / "coverage.xml";
    return ctx;
}

}  // namespace sievefl
