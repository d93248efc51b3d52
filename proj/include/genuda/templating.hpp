#pragma once

// Masking template (MLM), causal template (CLM) and classification template (CLS).

#include <filesystem>
#include <string>
#include <vector>

#include "genuda/corpus.hpp"
#include "genuda/masking.hpp"

namespace genuda {

struct TemplatePair {
  std::string input_text;
  std::string output_text;

  bool operator==(const TemplatePair&) const = default;
};

enum class TemplateKind { kMlm, kClm, kCls };

TemplateKind parse_template_kind(const std::string& name);
const char* template_kind_name(TemplateKind kind);

struct PromptTemplate {
  TemplateKind kind = TemplateKind::kMlm;
  std::string instruction = "Fill in the blanks:";
  std::string cls_pattern = "{x} Is this sentence positive or negative?";
  std::vector<std::string> verbalizer;  // per class

  static PromptTemplate defaults(const LabelSpace& labels);
  // Keys: kind, instruction, cls_pattern, verbalizer.<class name>.
  static PromptTemplate from_config(const KvConfig& cfg, const LabelSpace& labels);
  KvConfig to_config(const LabelSpace& labels) const;
  void validate() const;
};

// x̃ = instruction + " " + sentence with each maximal run of masked words replaced by "_";
// ỹ = "<sep> span1 <sep> span2 ... <sep>".
TemplatePair mlm_template(const std::vector<std::string>& words, const MaskPlan& plan, const PromptTemplate& tmpl);

// x̃ = the sequence verbatim; ỹ = its normalized tokens shifted by one, closed by <eos>.
TemplatePair clm_template(const std::vector<std::string>& words);

TemplatePair cls_template(const std::string& x, int y, const PromptTemplate& tmpl);
// Classification input only (target-domain and inference paths have no label).
std::string cls_input(const std::string& x, const PromptTemplate& tmpl);

int deverbalize(const std::string& label_string, const LabelSpace& labels);

}  // namespace genuda
