#include "sievefl/corpus.hpp"

#include "sievefl/errors.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace sievefl {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Lexical masking: comments and literals become spaces (newlines are kept so
// offsets and line numbers stay valid). Comment spans are remembered for doc
// comment attachment.
// ---------------------------------------------------------------------------

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
};

struct MaskedSource {
    std::string text;
    std::vector<Span> comments;
};

void blank(std::string& s, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
        if (s[i] != '\n') s[i] = ' ';
    }
}

MaskedSource mask_source(std::string_view src) {
    MaskedSource out{std::string(src), {}};
    std::string& m = out.text;
    const std::size_t n = src.size();
    std::size_t i = 0;
    while (i < n) {
        const char c = src[i];
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            std::size_t j = src.find('\n', i);
            if (j == std::string_view::npos) j = n;
            out.comments.push_back({i, j});
            blank(m, i, j);
            i = j;
        } else if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            std::size_t j = src.find("*/", i + 2);
            if (j == std::string_view::npos) throw ParseError("unterminated block comment");
            j += 2;
            out.comments.push_back({i, j});
            blank(m, i, j);
            i = j;
        } else if (c == '"' && src.substr(i, 3) == "\"\"\"") {
            std::size_t j = i + 3;
            for (;;) {
                j = src.find("\"\"\"", j);
                if (j == std::string_view::npos) throw ParseError("unterminated text block");
                if (src[j - 1] != '\\') break;
                ++j;
            }
            blank(m, i + 1, j + 2);
            i = j + 3;
        } else if (c == '"' || c == '\'') {
            std::size_t j = i + 1;
            while (j < n && src[j] != c) {
                if (src[j] == '\\') ++j;
                else if (src[j] == '\n') throw ParseError("unterminated literal");
                ++j;
            }
            if (j >= n) throw ParseError("unterminated literal");
            blank(m, i + 1, j);
            i = j + 1;
        } else {
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Header tokens
// ---------------------------------------------------------------------------

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (is_ident_char(c)) {
            std::size_t j = i;
            while (j < text.size() && is_ident_char(text[j])) ++j;
            toks.emplace_back(text.substr(i, j - i));
            i = j;
        } else if (text.substr(i, 3) == "...") {
            toks.emplace_back("...");
            i += 3;
        } else if (text.substr(i, 2) == "->") {
            toks.emplace_back("->");
            i += 2;
        } else {
            toks.emplace_back(1, c);
            ++i;
        }
    }
    return toks;
}

bool is_identifier(const std::string& t) {
    return !t.empty() && is_ident_char(t[0]) && !std::isdigit(static_cast<unsigned char>(t[0]));
}

const std::unordered_set<std::string>& modifiers() {
    static const std::unordered_set<std::string> set = {
        "public", "protected",    "private",  "static",   "final",  "abstract", "synchronized",
        "native", "strictfp",     "default",  "transient", "volatile", "sealed", "non",
    };
    return set;
}

const std::unordered_set<std::string>& statement_keywords() {
    static const std::unordered_set<std::string> set = {
        "if",     "for", "while", "switch", "catch", "synchronized", "return", "new",
        "else",   "try", "do",    "throw",  "assert", "case",        "this",   "super",
    };
    return set;
}

std::size_t match_close(const std::vector<std::string>& toks, std::size_t open,
                        const std::string& o, const std::string& c) {
    int depth = 0;
    for (std::size_t k = open; k < toks.size(); ++k) {
        if (toks[k] == o) ++depth;
        else if (toks[k] == c && --depth == 0) return k;
    }
    return toks.size();
}

/// Drops annotations ("@Foo", "@a.b.Foo(...)"); "@interface" keeps "interface".
std::vector<std::string> strip_annotations(const std::vector<std::string>& toks) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < toks.size(); ++k) {
        if (toks[k] != "@") {
            out.push_back(toks[k]);
            continue;
        }
        if (k + 1 < toks.size() && toks[k + 1] == "interface") continue;
        ++k;  // annotation name, possibly qualified
        while (k + 2 < toks.size() && toks[k + 1] == "." && is_identifier(toks[k + 2])) k += 2;
        if (k + 1 < toks.size() && toks[k + 1] == "(") {
            k = match_close(toks, k + 1, "(", ")");
        }
    }
    return out;
}

/// Removes every <...> group (generic arguments) from a token list.
std::vector<std::string> strip_generics(const std::vector<std::string>& toks) {
    std::vector<std::string> out;
    int depth = 0;
    for (const auto& t : toks) {
        if (t == "<") ++depth;
        else if (t == ">") depth = std::max(0, depth - 1);
        else if (depth == 0) out.push_back(t);
    }
    return out;
}

struct TypeDecl {
    std::string name;
};

std::optional<TypeDecl> as_type_decl(const std::vector<std::string>& toks) {
    for (std::size_t k = 0; k + 1 < toks.size(); ++k) {
        const auto& t = toks[k];
        if (t == "class" || t == "interface" || t == "enum") {
            if (k > 0 && toks[k - 1] == ".") continue;
            if (is_identifier(toks[k + 1])) return TypeDecl{toks[k + 1]};
        }
        if (t == "record" && is_identifier(toks[k + 1]) && k + 2 < toks.size() &&
            (toks[k + 2] == "(" || toks[k + 2] == "<")) {
            return TypeDecl{toks[k + 1]};
        }
    }
    return std::nullopt;
}

struct Signature {
    std::string name;
    std::vector<std::string> param_types;
};

std::vector<std::string> parse_params(const std::vector<std::string>& toks) {
    std::vector<std::vector<std::string>> groups(1);
    int depth = 0;
    for (const auto& t : toks) {
        if (t == "<" || t == "(" || t == "[") ++depth;
        if (t == ">" || t == ")" || t == "]") --depth;
        if (t == "," && depth == 0) {
            groups.emplace_back();
        } else {
            groups.back().push_back(t);
        }
    }
    std::vector<std::string> types;
    for (auto g : groups) {
        g = strip_generics(g);
        std::erase(g, std::string("final"));
        if (g.empty()) continue;
        // trailing [] after the parameter name belong to the type
        std::string dims;
        while (g.size() >= 2 && g.back() == "]" && g[g.size() - 2] == "[") {
            dims += "[]";
            g.resize(g.size() - 2);
        }
        if (g.size() < 2) continue;
        const std::string name = g.back();
        g.pop_back();
        if (name == "this") continue;  // receiver parameter
        std::string type;
        for (const auto& t : g) {
            if (t != "...") type += t;
        }
        types.push_back(type + dims);
    }
    return types;
}

std::optional<Signature> as_method(std::vector<std::string> toks, std::string_view simple_class) {
    // drop a trailing throws clause
    {
        int depth = 0;
        for (std::size_t k = 0; k < toks.size(); ++k) {
            if (toks[k] == "(") ++depth;
            if (toks[k] == ")") --depth;
            if (depth == 0 && toks[k] == "throws") {
                toks.resize(k);
                break;
            }
        }
    }
    if (toks.empty() || toks.back() != ")") return std::nullopt;
    int depth = 0;
    std::size_t open = toks.size();
    for (std::size_t k = toks.size(); k-- > 0;) {
        if (toks[k] == ")") ++depth;
        if (toks[k] == "(" && --depth == 0) {
            open = k;
            break;
        }
    }
    if (open == toks.size() || open == 0) return std::nullopt;
    const std::string& name = toks[open - 1];
    if (!is_identifier(name) || statement_keywords().contains(name)) return std::nullopt;

    std::vector<std::string> prefix(toks.begin(), toks.begin() + static_cast<long>(open - 1));
    for (const auto& t : prefix) {
        if (t == "=" || t == "new" || t == "(" || t == ")" || t == ";" || t == "->") return std::nullopt;
    }
    prefix = strip_generics(prefix);
    std::erase_if(prefix, [](const std::string& t) { return modifiers().contains(t) || t == "-"; });
    bool has_return_type = false;
    for (const auto& t : prefix) {
        if (t == ",") return std::nullopt;
        if (is_identifier(t)) has_return_type = true;
    }
    if (!has_return_type && name != simple_class) return std::nullopt;

    std::vector<std::string> inner(toks.begin() + static_cast<long>(open) + 1, toks.end() - 1);
    return Signature{name, parse_params(inner)};
}

// ---------------------------------------------------------------------------
// Member scanner
// ---------------------------------------------------------------------------

class Extractor {
public:
    Extractor(std::string_view src, std::string_view file_path)
        : src_(src), file_path_(file_path), masked_(mask_source(src)) {
        line_starts_.push_back(0);
        for (std::size_t i = 0; i < src_.size(); ++i) {
            if (src_[i] == '\n') line_starts_.push_back(i + 1);
        }
    }

    std::vector<MethodDocument> run() {
        check_balance();
        const std::string pkg = package_name();
        scan_members(0, masked_.text.size(), pkg, /*top_level=*/true);
        std::sort(docs_.begin(), docs_.end(), [](const auto& a, const auto& b) {
            return std::tie(a.start_line, a.doc_id) < std::tie(b.start_line, b.doc_id);
        });
        return std::move(docs_);
    }

private:
    const std::string& m() const { return masked_.text; }

    void check_balance() const {
        long depth = 0;
        for (char c : m()) {
            if (c == '{') ++depth;
            if (c == '}' && --depth < 0) throw ParseError("unbalanced braces: unexpected '}'");
        }
        if (depth != 0) throw ParseError("unbalanced braces: " + std::to_string(depth) + " unclosed '{'");
    }

    std::string package_name() const {
        const auto toks = tokenize(m());
        for (std::size_t k = 0; k < toks.size(); ++k) {
            if (toks[k] == "package") {
                std::string name;
                for (std::size_t j = k + 1; j < toks.size() && toks[j] != ";"; ++j) name += toks[j];
                return name;
            }
            if (toks[k] == "class" || toks[k] == "interface" || toks[k] == "enum") break;
        }
        return {};
    }

    std::size_t matching_brace(std::size_t open) const {
        long depth = 0;
        for (std::size_t i = open; i < m().size(); ++i) {
            if (m()[i] == '{') ++depth;
            if (m()[i] == '}' && --depth == 0) return i;
        }
        throw ParseError("unbalanced braces");
    }

    std::size_t line_of(std::size_t offset) const {
        auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), offset);
        return static_cast<std::size_t>(it - line_starts_.begin());
    }

    std::string lines_text(std::size_t first, std::size_t last) const {
        const std::size_t b = line_starts_[first - 1];
        std::size_t e = last < line_starts_.size() ? line_starts_[last] - 1 : src_.size();
        if (e > b && src_[e - 1] == '\r') --e;
        return std::string(src_.substr(b, e - b));
    }

    /// Contiguous run of comments ending right before `decl`, each starting a line.
    std::string doc_comment_before(std::size_t region_begin, std::size_t decl) const {
        std::vector<Span> run;
        std::size_t cursor = decl;
        for (auto it = masked_.comments.rbegin(); it != masked_.comments.rend(); ++it) {
            if (it->end > cursor) continue;
            if (it->begin < region_begin) break;
            bool only_space = true;
            for (std::size_t i = it->end; i < cursor; ++i) {
                if (!std::isspace(static_cast<unsigned char>(src_[i]))) only_space = false;
            }
            if (!only_space) break;
            const std::size_t ls = line_starts_[line_of(it->begin) - 1];
            for (std::size_t i = ls; i < it->begin; ++i) {
                if (!std::isspace(static_cast<unsigned char>(src_[i]))) only_space = false;
            }
            if (!only_space) break;
            run.push_back(*it);
            cursor = it->begin;
        }
        std::string out;
        for (auto it = run.rbegin(); it != run.rend(); ++it) {
            if (!out.empty()) out += '\n';
            out += src_.substr(it->begin, it->end - it->begin);
        }
        return out;
    }

    void emit(std::size_t region_begin, std::size_t decl, std::size_t close,
              const std::string& class_name, const std::string& name,
              std::vector<std::string> params) {
        MethodDocument d;
        d.file_path = std::string(file_path_);
        d.class_name = class_name;
        d.method_name = name;
        d.param_types = std::move(params);
        d.arity = d.param_types.size();
        d.start_line = line_of(decl);
        d.end_line = line_of(close);
        d.body_text = lines_text(d.start_line, d.end_line);
        d.doc_comment = doc_comment_before(region_begin, decl);
        d.index_text = d.doc_comment.empty() ? d.body_text : d.doc_comment + "\n" + d.body_text;
        d.doc_id = make_doc_id(d.file_path, d.class_name, d.method_name, d.param_types, d.start_line);
        docs_.push_back(std::move(d));
    }

    void scan_members(std::size_t begin, std::size_t end, const std::string& scope, bool top_level) {
        std::size_t header = begin;
        int paren = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const char c = m()[i];
            if (c == '(') {
                ++paren;
            } else if (c == ')') {
                --paren;
            } else if (c == ';' && paren == 0) {
                header = i + 1;
            } else if (c == '{' && paren > 0) {
                i = matching_brace(i);  // annotation array or similar inside a header
            } else if (c == '{') {
                const std::size_t close = matching_brace(i);
                handle_block(header, i, close, scope, top_level);
                i = close;
                header = close + 1;
                paren = 0;
            }
        }
    }

    void handle_block(std::size_t header, std::size_t open, std::size_t close,
                      const std::string& scope, bool top_level) {
        const std::string_view head(m().data() + header, open - header);
        std::size_t decl = header;
        while (decl < open && std::isspace(static_cast<unsigned char>(m()[decl]))) ++decl;

        const auto toks = strip_annotations(tokenize(head));
        if (auto type = as_type_decl(toks)) {
            std::string qualified;
            if (top_level) qualified = scope.empty() ? type->name : scope + "." + type->name;
            else qualified = scope + "$" + type->name;
            scan_members(open + 1, close, qualified, false);
            return;
        }
        if (top_level) return;
        if (toks.empty()) {
            emit(header, decl, close, scope, "<init>", {});
            return;
        }
        if (toks.size() == 1 && toks[0] == "static") {
            emit(header, decl, close, scope, "<clinit>", {});
            return;
        }
        if (auto sig = as_method(toks, simple_class_name(scope))) {
            emit(header, decl, close, scope, sig->name, std::move(sig->param_types));
        }
        // anything else (anonymous classes, enum constant bodies, field
        // initializers) is skipped wholesale
    }

    std::string_view src_;
    std::string_view file_path_;
    MaskedSource masked_;
    std::vector<std::size_t> line_starts_;
    std::vector<MethodDocument> docs_;
};

bool glob_segments(const std::vector<std::string>& pat, std::size_t pi,
                   const std::vector<std::string>& path, std::size_t si) {
    if (pi == pat.size()) return si == path.size();
    if (pat[pi] == "**") {
        for (std::size_t k = si; k <= path.size(); ++k) {
            if (glob_segments(pat, pi + 1, path, k)) return true;
        }
        return false;
    }
    if (si == path.size()) return false;
    if (::fnmatch(pat[pi].c_str(), path[si].c_str(), FNM_PERIOD) != 0) return false;
    return glob_segments(pat, pi + 1, path, si + 1);
}

std::vector<std::string> split_path(std::string_view p) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= p.size()) {
        std::size_t slash = p.find('/', start);
        if (slash == std::string_view::npos) slash = p.size();
        if (slash > start) out.emplace_back(p.substr(start, slash - start));
        start = slash + 1;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string MethodKey::to_string() const {
    return class_name + "#" + method_name + "(" + std::to_string(arity) + ")";
}

MethodKey MethodKey::parse(std::string_view text) {
    const auto hash = text.find('#');
    const auto open = text.rfind('(');
    const auto close = text.rfind(')');
    if (hash == std::string_view::npos || open == std::string_view::npos ||
        close != text.size() - 1 || open < hash || hash == 0 || open == hash + 1) {
        throw InputError("malformed method identifier '" + std::string(text) +
                         "', expected Class#method(arity)");
    }
    MethodKey key;
    key.class_name = std::string(text.substr(0, hash));
    key.method_name = std::string(text.substr(hash + 1, open - hash - 1));
    const std::string digits(text.substr(open + 1, close - open - 1));
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
        throw InputError("malformed arity in '" + std::string(text) + "'");
    }
    key.arity = std::stoul(digits);
    return key;
}

MethodKey method_key(const MethodDocument& doc) {
    return {doc.class_name, doc.method_name, doc.param_types.size()};
}

std::string simple_class_name(std::string_view class_name) {
    const auto cut = class_name.find_last_of(".$");
    return std::string(cut == std::string_view::npos ? class_name : class_name.substr(cut + 1));
}

bool is_constructor(const MethodDocument& doc) {
    return doc.method_name == simple_class_name(doc.class_name);
}

std::string make_doc_id(std::string_view file_path, std::string_view class_name,
                        std::string_view method_name, const std::vector<std::string>& param_types,
                        std::size_t start_line) {
    std::string id;
    id.append(class_name).append("#").append(method_name).append("(");
    for (std::size_t i = 0; i < param_types.size(); ++i) {
        if (i) id += ',';
        id += param_types[i];
    }
    id.append(")@").append(file_path).append(":").append(std::to_string(start_line));
    return id;
}

std::string method_label(const MethodDocument& doc) {
    std::string label = doc.class_name + "." + doc.method_name + "(";
    for (std::size_t i = 0; i < doc.param_types.size(); ++i) {
        if (i) label += ", ";
        label += doc.param_types[i];
    }
    return label + ")";
}

std::vector<MethodDocument> extract_methods_from_source(std::string_view source,
                                                        std::string_view file_path) {
    return Extractor(source, file_path).run();
}

bool glob_match(std::string_view pattern, std::string_view path) {
    return glob_segments(split_path(pattern), 0, split_path(path), 0);
}

ExtractionResult extract_methods(const fs::path& source_root, const ExtractOptions& options) {
    std::error_code ec;
    if (!fs::is_directory(source_root, ec)) {
        throw InputError("source root '" + source_root.string() + "' is not a readable directory");
    }

    std::vector<std::string> files;
    for (auto it = fs::recursive_directory_iterator(
             source_root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        if (!it->is_regular_file(ec)) continue;
        const std::string rel = fs::relative(it->path(), source_root, ec).generic_string();
        if (glob_match(options.glob, rel)) files.push_back(rel);
    }
    std::sort(files.begin(), files.end());

    struct Slot {
        std::vector<MethodDocument> docs;
        std::optional<ExtractionWarning> warning;
    };
    std::vector<Slot> slots(files.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            std::ifstream in(source_root / files[i], std::ios::binary);
            if (!in) {
                slots[i].warning = ExtractionWarning{files[i], "unreadable file"};
                continue;
            }
            std::ostringstream buf;
            buf << in.rdbuf();
            try {
                slots[i].docs = extract_methods_from_source(buf.str(), files[i]);
            } catch (const ParseError& e) {
                slots[i].warning = ExtractionWarning{files[i], std::string("skipped: ") + e.what()};
            }
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(options.parallelism,
                                                             static_cast<unsigned>(files.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ExtractionResult result;
    for (auto& s : slots) {
        std::move(s.docs.begin(), s.docs.end(), std::back_inserter(result.documents));
        if (s.warning) result.warnings.push_back(std::move(*s.warning));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const MethodDocument& d) {
    j = nlohmann::json{{"doc_id", d.doc_id},
                       {"file_path", d.file_path},
                       {"class_name", d.class_name},
                       {"method_name", d.method_name},
                       {"param_types", d.param_types},
                       {"arity", d.arity},
                       {"start_line", d.start_line},
                       {"end_line", d.end_line},
                       {"body_text", d.body_text},
                       {"doc_comment", d.doc_comment},
                       {"index_text", d.index_text}};
}

void from_json(const nlohmann::json& j, MethodDocument& d) {
    j.at("doc_id").get_to(d.doc_id);
    j.at("file_path").get_to(d.file_path);
    j.at("class_name").get_to(d.class_name);
    j.at("method_name").get_to(d.method_name);
    j.at("param_types").get_to(d.param_types);
    j.at("arity").get_to(d.arity);
    j.at("start_line").get_to(d.start_line);
    j.at("end_line").get_to(d.end_line);
    j.at("body_text").get_to(d.body_text);
    j.at("doc_comment").get_to(d.doc_comment);
    j.at("index_text").get_to(d.index_text);
    if (d.arity != d.param_types.size()) {
        throw InputError("corpus record " + d.doc_id + ": arity does not match param_types");
    }
}

void write_corpus(const fs::path& path, const std::vector<MethodDocument>& docs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write corpus file '" + path.string() + "'");
    for (const auto& d : docs) out << nlohmann::json(d).dump() << '\n';
}

std::vector<MethodDocument> read_corpus(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read corpus file '" + path.string() + "'");
    std::vector<MethodDocument> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            docs.push_back(nlohmann::json::parse(line).get<MethodDocument>());
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return docs;
}

}  // namespace sievefl
