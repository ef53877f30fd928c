#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rchat {

// Named prompt templates with {placeholder} slots. Defaults are compiled in;
// any of them can be overridden by <name>.txt files in a directory.
class PromptSet {
 public:
  static PromptSet defaults();
  // Defaults, overridden by every <name>.txt found in dir.
  static PromptSet load(const std::filesystem::path& dir);

  const std::string& get(std::string_view name) const;
  void set(const std::string& name, std::string body);
  const std::map<std::string, std::string>& all() const { return templates_; }

  // Variables filled into every template ({domain} by default).
  void set_var(const std::string& key, std::string value);
  const std::map<std::string, std::string>& vars() const { return vars_; }

  // Template `name` with the given values plus the set-wide variables.
  std::string render(std::string_view name,
                     const std::vector<std::pair<std::string, std::string>>& values) const;

  // Stable digest of the template set, recorded in build manifests.
  std::string version() const;

  void write(const std::filesystem::path& dir) const;

 private:
  std::map<std::string, std::string> templates_;
  std::map<std::string, std::string> vars_;
};

namespace prompt {
inline constexpr std::string_view kExtract = "extract_graph";
inline constexpr std::string_view kGleanContinue = "glean_continue";
inline constexpr std::string_view kGleanCheck = "glean_check";
inline constexpr std::string_view kSummarizeDescriptions = "summarize_descriptions";
inline constexpr std::string_view kCommunityReport = "community_report";
inline constexpr std::string_view kSystem = "system";
inline constexpr std::string_view kLocalSearch = "local_search";
inline constexpr std::string_view kRagSearch = "rag_search";
inline constexpr std::string_view kGlobalMap = "global_map";
inline constexpr std::string_view kGlobalReduce = "global_reduce";

inline constexpr std::string_view kRecordDelimiter = "##";
inline constexpr std::string_view kTupleDelimiter = "|";
inline constexpr std::string_view kCompletionMarker = "<|COMPLETE|>";
}  // namespace prompt

}  // namespace rchat
