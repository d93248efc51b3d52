#include "genuda/templating.hpp"

#include <algorithm>
#include <cctype>

#include "genuda/error.hpp"
#include "genuda/tokenizer.hpp"

namespace genuda {

namespace {

constexpr std::string_view kPlaceholder = "{x}";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

size_t count_occurrences(const std::string& s, std::string_view needle) {
  size_t n = 0;
  for (size_t pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

TemplateKind parse_template_kind(const std::string& name) {
  if (name == "mlm") return TemplateKind::kMlm;
  if (name == "clm") return TemplateKind::kClm;
  if (name == "cls") return TemplateKind::kCls;
  fail(ErrorCode::kConfig, "template kind must be mlm, clm or cls, got `" + name + "`");
}

const char* template_kind_name(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::kMlm: return "mlm";
    case TemplateKind::kClm: return "clm";
    case TemplateKind::kCls: return "cls";
  }
  return "?";
}

PromptTemplate PromptTemplate::defaults(const LabelSpace& labels) {
  PromptTemplate t;
  t.verbalizer = labels.verbalizations;
  return t;
}

void PromptTemplate::validate() const {
  if (count_occurrences(cls_pattern, kPlaceholder) != 1) {
    fail(ErrorCode::kConfig, "cls_pattern must contain {x} exactly once");
  }
  if (trim(instruction).empty()) fail(ErrorCode::kConfig, "template instruction is empty");
  std::vector<std::string> seen;
  for (const auto& v : verbalizer) {
    const std::string key = lower(trim(v));
    if (key.empty()) fail(ErrorCode::kConfig, "empty verbalization");
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      fail(ErrorCode::kConfig, "verbalizations must be distinct, `" + v + "` repeats");
    }
    seen.push_back(key);
  }
}

PromptTemplate PromptTemplate::from_config(const KvConfig& cfg, const LabelSpace& labels) {
  cfg.require_known({"kind", "instruction", "cls_pattern"}, {"verbalizer."});
  PromptTemplate t = defaults(labels);
  t.kind = parse_template_kind(cfg.get_string("kind", "mlm"));
  t.instruction = cfg.get_string("instruction", t.instruction);
  t.cls_pattern = cfg.get_string("cls_pattern", t.cls_pattern);
  for (const auto& [cls, verb] : cfg.with_prefix("verbalizer.")) {
    auto it = std::find(labels.class_names.begin(), labels.class_names.end(), cls);
    if (it == labels.class_names.end()) fail(ErrorCode::kConfig, "verbalizer for unknown class `" + cls + "`");
    t.verbalizer[static_cast<size_t>(it - labels.class_names.begin())] = verb;
  }
  t.validate();
  return t;
}

KvConfig PromptTemplate::to_config(const LabelSpace& labels) const {
  KvConfig c;
  c.set("kind", template_kind_name(kind));
  c.set("instruction", instruction);
  c.set("cls_pattern", cls_pattern);
  for (size_t i = 0; i < verbalizer.size(); ++i) c.set("verbalizer." + labels.class_names[i], verbalizer[i]);
  return c;
}

TemplatePair mlm_template(const std::vector<std::string>& words, const MaskPlan& plan, const PromptTemplate& tmpl) {
  const size_t n = words.size();
  std::vector<bool> masked(n, false);
  for (size_t p : plan.positions) {
    if (p >= n) fail(ErrorCode::kTemplate, "mask position " + std::to_string(p) + " out of range");
    masked[p] = true;
  }
  const size_t count = static_cast<size_t>(std::count(masked.begin(), masked.end(), true));
  if (count == 0) fail(ErrorCode::kTemplate, "mask plan masks no word");
  if (count == n) fail(ErrorCode::kTemplate, "mask plan masks every word");

  std::string input = tmpl.instruction;
  std::string output = std::string(kSepMarker);
  for (size_t i = 0; i < n;) {
    if (!masked[i]) {
      input += " " + escape_surface_word(words[i]);
      ++i;
      continue;
    }
    input += " " + std::string(kBlankMarker);
    while (i < n && masked[i]) {
      output += " " + escape_surface_word(words[i]);
      ++i;
    }
    output += " " + std::string(kSepMarker);
  }
  return TemplatePair{input, output};
}

TemplatePair clm_template(const std::vector<std::string>& words) {
  if (words.empty()) fail(ErrorCode::kTemplate, "clm_template: empty sequence");
  std::string input;
  for (size_t i = 0; i < words.size(); ++i) input += (i ? " " : "") + words[i];
  const auto tokens = normalize_words(input);
  std::string output;
  for (size_t i = 1; i < tokens.size(); ++i) output += tokens[i] + " ";
  output += std::string(kEosMarker);
  return TemplatePair{input, output};
}

std::string cls_input(const std::string& x, const PromptTemplate& tmpl) {
  std::string out = tmpl.cls_pattern;
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), x);
  return out;
}

TemplatePair cls_template(const std::string& x, int y, const PromptTemplate& tmpl) {
  if (y < 0 || static_cast<size_t>(y) >= tmpl.verbalizer.size()) {
    fail(ErrorCode::kLabel, "class " + std::to_string(y) + " outside the verbalizer");
  }
  return TemplatePair{cls_input(x, tmpl), tmpl.verbalizer[static_cast<size_t>(y)]};
}

int deverbalize(const std::string& label_string, const LabelSpace& labels) {
  const std::string key = lower(trim(label_string));
  for (int c = 0; c < labels.size(); ++c) {
    if (lower(trim(labels.verbalizations[static_cast<size_t>(c)])) == key) return c;
  }
  fail(ErrorCode::kLabel, "cannot deverbalize `" + label_string + "`");
}

}  // namespace genuda
