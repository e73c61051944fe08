#ifndef MULTITOX_TEXT_PIPELINE_HPP
#define MULTITOX_TEXT_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace multitox {

// Cleaning is the composition of four stages applied in order:
//   normalize (whitespace, case, char repeats, abbreviations)
//   strip     (characters outside the allowed script ranges, digits,
//              symbols, URL-like tokens)
//   drop stopwords
//   refine    (trim, collapse spaces, optional word hook)
struct CleaningConfig {
  struct CodepointRange {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;  // inclusive
  };

  // Sorted, non-overlapping.  Defaults cover lowercase Latin and Bengali.
  std::vector<CodepointRange> allowed_script_ranges = {
      {0x0061, 0x007A}, {0x0980, 0x09FF}};
  std::set<std::string> stopwords;
  std::map<std::string, std::string> abbreviation_map;
  int max_char_repeat = 2;
  // Stub hook for a stemmer/lemmatizer; applied per word in the final
  // refinement stage when set.
  std::function<std::string(const std::string&)> word_hook;

  void validate() const;
};

std::set<std::string> load_word_list(const std::string& path);
std::map<std::string, std::string> load_abbreviation_map(
    const std::string& path);

std::string clean(const std::string& text, const CleaningConfig& cfg);

class Vocabulary {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kContinuation = "##";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const;
  int id_of(const std::string& token) const;  // unk id when absent
  const std::string& token_of(int id) const;

  int pad_id() const { return 0; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
  int unk_id_ = -1, cls_id_ = -1, sep_id_ = -1;

  void index_specials();
};

// Frequency-ranked whole words over a character fallback; deterministic for
// a given corpus order (ties broken lexicographically).  Character pieces
// ignore min_freq so that any in-corpus word stays tokenizable.
Vocabulary build_vocab(const std::vector<std::string>& cleaned_corpus,
                       int max_size, int min_freq);

// Greedy longest-match subword split per word, wrapped in [CLS] ... [SEP].
// A word with no matchable piece at some position becomes a single [UNK].
std::vector<std::string> tokenize(const std::string& cleaned_text,
                                  const Vocabulary& vocab);

struct TokenizedSequence {
  std::vector<int> ids;    // length max_len
  std::vector<int> mask;   // 1 = real token, 0 = padding
  int original_token_count = 0;
};

TokenizedSequence encode(const std::vector<std::string>& tokens,
                         const Vocabulary& vocab, int max_len);

// Inverse of encode for inspection: drops padding, keeps specials.
std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab);

// UTF-8 helpers shared by the pipeline and the explainer.
std::vector<std::uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<std::uint32_t>& cps);
std::vector<std::string> split_words(const std::string& s);

}  // namespace multitox

#endif
