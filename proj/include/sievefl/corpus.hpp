#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sievefl {

/// One extracted Java method (or constructor / initializer block) and the
/// comment block directly above it. This is the unit of retrieval and of
/// per-method screening.
struct MethodDocument {
    std::string doc_id;
    std::string file_path;   // relative to the source root, '/' separated
    std::string class_name;  // binary name, e.g. "com.shop.Cart$Line"
    std::string method_name;
    std::vector<std::string> param_types;
    std::size_t arity = 0;
    std::size_t start_line = 0;  // 1-based, inclusive
    std::size_t end_line = 0;
    std::string body_text;    // source lines [start_line, end_line] joined by '\n'
    std::string doc_comment;  // preceding comment block, verbatim, or empty
    std::string index_text;   // text handed to the embedder

    bool operator==(const MethodDocument&) const = default;
};

/// Join key between source methods and coverage entries. Same-arity
/// overloads intentionally collapse onto one key.
struct MethodKey {
    std::string class_name;
    std::string method_name;
    std::size_t arity = 0;

    auto operator<=>(const MethodKey&) const = default;
    bool operator==(const MethodKey&) const = default;

    /// "com.shop.Cart#add(2)"
    std::string to_string() const;
    /// Inverse of to_string(); throws InputError on malformed text.
    static MethodKey parse(std::string_view text);
};

MethodKey method_key(const MethodDocument& doc);

/// Simple (unqualified, innermost) name of a binary class name.
std::string simple_class_name(std::string_view class_name);

/// True when the document is a constructor (method name equals the simple
/// class name).
bool is_constructor(const MethodDocument& doc);

/// doc_id derivation. Readable and stable across re-extraction:
///   "<class_name>#<method_name>(<param_types joined by ','>)@<file_path>:<start_line>"
std::string make_doc_id(std::string_view file_path, std::string_view class_name,
                        std::string_view method_name, const std::vector<std::string>& param_types,
                        std::size_t start_line);

/// Short human label used when several methods are presented to an LLM at once.
std::string method_label(const MethodDocument& doc);

struct ExtractionWarning {
    std::string file_path;
    std::string message;
};

struct ExtractionResult {
    std::vector<MethodDocument> documents;
    std::vector<ExtractionWarning> warnings;
};

struct ExtractOptions {
    std::string glob = "**/*.java";
    unsigned parallelism = 1;
};

/// Extracts methods from one Java compilation unit. Throws ParseError for
/// unbalanced braces, unterminated comments or literals.
std::vector<MethodDocument> extract_methods_from_source(std::string_view source,
                                                        std::string_view file_path);

/// Walks `source_root`, extracting every file matching the glob. Unreadable
/// or malformed files become warnings; the rest of the corpus is still
/// returned. Output is ordered by (file_path, start_line).
ExtractionResult extract_methods(const std::filesystem::path& source_root,
                                 const ExtractOptions& options = {});

/// Glob with '*', '?' and '**' (any number of directories), matched against a
/// '/'-separated relative path.
bool glob_match(std::string_view pattern, std::string_view path);

void to_json(nlohmann::json& j, const MethodDocument& doc);
void from_json(const nlohmann::json& j, MethodDocument& doc);

/// corpus.jsonl: one MethodDocument per line.
void write_corpus(const std::filesystem::path& path, const std::vector<MethodDocument>& docs);
std::vector<MethodDocument> read_corpus(const std::filesystem::path& path);

}  // namespace sievefl
