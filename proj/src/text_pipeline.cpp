#include "multitox/text_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "multitox/errors.hpp"

namespace multitox {

// ---- UTF-8 ------------------------------------------------------------------

std::vector<std::uint32_t> utf8_decode(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = 0;
    std::size_t extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      extra = 3;
    } else {
      // Stray continuation byte; treat as replacement char.
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (extra > 0 && i + extra >= s.size()) {
      out.push_back(0xFFFD);
      break;
    }
    bool bad = false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) {
        bad = true;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (bad) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string utf8_encode(const std::vector<std::uint32_t>& cps) {
  std::string out;
  for (std::uint32_t cp : cps) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream is(s);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

// ---- cleaning ---------------------------------------------------------------

void CleaningConfig::validate() const {
  if (max_char_repeat < 1) {
    throw ConfigError("cleaning: max_char_repeat must be >= 1");
  }
  for (std::size_t i = 0; i < allowed_script_ranges.size(); ++i) {
    const auto& r = allowed_script_ranges[i];
    if (r.lo > r.hi) throw ConfigError("cleaning: inverted codepoint range");
    if (i > 0 && allowed_script_ranges[i - 1].hi >= r.lo) {
      throw ConfigError("cleaning: script ranges must be sorted and disjoint");
    }
  }
}

std::set<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word list: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::map<std::string, std::string> load_abbreviation_map(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open abbreviation map: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream is(line);
    std::string key, word, expansion;
    if (!(is >> key)) continue;
    while (is >> word) {
      if (!expansion.empty()) expansion += ' ';
      expansion += word;
    }
    if (expansion.empty()) {
      throw ConfigError("abbreviation map " + path + ":" +
                        std::to_string(lineno) + ": entry without expansion");
    }
    out[key] = expansion;
  }
  return out;
}

namespace {

bool in_ranges(std::uint32_t cp,
               const std::vector<CleaningConfig::CodepointRange>& ranges) {
  for (const auto& r : ranges) {
    if (cp >= r.lo && cp <= r.hi) return true;
  }
  return false;
}

std::string normalize_chars(const std::string& text,
                            const CleaningConfig& cfg) {
  std::vector<std::uint32_t> cps = utf8_decode(text);
  std::vector<std::uint32_t> norm;
  norm.reserve(cps.size());
  int run = 0;
  std::uint32_t prev = 0xFFFFFFFF;
  for (std::uint32_t cp : cps) {
    if (cp == '\t' || cp == '\n' || cp == '\r' || cp == 0x0B || cp == 0x0C ||
        cp == 0x00A0) {
      cp = ' ';
    }
    if (cp < 0x80 && std::isupper(static_cast<int>(cp))) {
      cp = static_cast<std::uint32_t>(std::tolower(static_cast<int>(cp)));
    }
    if (cp == prev) {
      if (++run >= cfg.max_char_repeat) continue;
    } else {
      prev = cp;
      run = 0;
    }
    norm.push_back(cp);
  }
  return utf8_encode(norm);
}

std::string expand_words(const std::string& s, const CleaningConfig& cfg) {
  std::string next;
  for (const std::string& w : split_words(s)) {
    auto it = cfg.abbreviation_map.find(w);
    if (!next.empty()) next += ' ';
    next += it != cfg.abbreviation_map.end() ? it->second : w;
  }
  return next;
}

// Stage 1: whitespace/case/char-repeat normalization plus abbreviation
// expansion, iterated to a fixpoint so cleaning stays idempotent even when
// expansions introduce case or character repeats.
std::string stage_normalize(const std::string& text,
                            const CleaningConfig& cfg) {
  std::string s = normalize_chars(text, cfg);
  for (int iter = 0; iter < 8 && !cfg.abbreviation_map.empty(); ++iter) {
    std::string renormed = normalize_chars(expand_words(s, cfg), cfg);
    if (renormed == s) break;
    s = renormed;
  }
  return s;
}

bool looks_like_url(const std::string& token) {
  if (token.find("://") != std::string::npos) return true;
  return token.rfind("www.", 0) == 0 || token.rfind("ww.", 0) == 0;
}

// Stage 2: drop URL-like tokens, then strip every codepoint outside the
// allowed script ranges (digits and symbols included).
std::string stage_strip(const std::string& text, const CleaningConfig& cfg) {
  std::string out;
  for (const std::string& token : split_words(text)) {
    if (looks_like_url(token)) continue;
    std::vector<std::uint32_t> kept;
    for (std::uint32_t cp : utf8_decode(token)) {
      if (in_ranges(cp, cfg.allowed_script_ranges)) kept.push_back(cp);
    }
    if (kept.empty()) continue;
    if (!out.empty()) out += ' ';
    out += utf8_encode(kept);
  }
  return out;
}

std::string stage_drop_stopwords(const std::string& text,
                                 const CleaningConfig& cfg) {
  if (cfg.stopwords.empty()) return text;
  std::string out;
  for (const std::string& token : split_words(text)) {
    if (cfg.stopwords.count(token)) continue;
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

std::string stage_refine(const std::string& text, const CleaningConfig& cfg) {
  std::string out;
  for (const std::string& token : split_words(text)) {
    std::string w = cfg.word_hook ? cfg.word_hook(token) : token;
    if (w.empty()) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

std::string clean(const std::string& text, const CleaningConfig& cfg) {
  cfg.validate();
  // One pass of the four stages in order; iterated to a fixpoint because
  // stripping can create fresh character repeats (e.g. "q2q2q" -> "qqq")
  // that the normalization stage has already gone past.
  std::string s = text;
  for (int iter = 0; iter < 4; ++iter) {
    std::string next = stage_refine(
        stage_drop_stopwords(stage_strip(stage_normalize(s, cfg), cfg), cfg),
        cfg);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

// ---- vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : id_to_token_(std::move(tokens)) {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<int>(i)).second) {
      throw ConfigError("vocabulary: duplicate token '" + id_to_token_[i] +
                        "'");
    }
  }
  index_specials();
}

void Vocabulary::index_specials() {
  auto need = [&](const char* tok) {
    auto it = token_to_id_.find(tok);
    if (it == token_to_id_.end()) {
      throw ConfigError(std::string("vocabulary: missing special token ") +
                        tok);
    }
    return it->second;
  };
  if (need(kPad) != 0) {
    throw ConfigError("vocabulary: [PAD] must have id 0");
  }
  unk_id_ = need(kUnk);
  cls_id_ = need(kCls);
  sep_id_ = need(kSep);
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("vocabulary: id " + std::to_string(id) + " outside [0, " +
                     std::to_string(size()) + ")");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  for (const std::string& t : id_to_token_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<std::string>& cleaned_corpus,
                       int max_size, int min_freq) {
  if (max_size <= 4) {
    throw ConfigError("build_vocab: max_size must exceed the 4 special tokens");
  }
  if (cleaned_corpus.empty()) {
    throw ConfigError("build_vocab: empty corpus");
  }
  std::map<std::string, long> word_freq;
  std::set<std::uint32_t> chars;
  for (const std::string& text : cleaned_corpus) {
    for (const std::string& w : split_words(text)) {
      ++word_freq[w];
      for (std::uint32_t cp : utf8_decode(w)) chars.insert(cp);
    }
  }

  std::vector<std::string> tokens = {Vocabulary::kPad, Vocabulary::kUnk,
                                     Vocabulary::kCls, Vocabulary::kSep};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto push = [&](const std::string& t) {
    if (static_cast<int>(tokens.size()) >= max_size) return;
    if (seen.insert(t).second) tokens.push_back(t);
  };

  // Character fallback first so every in-corpus word stays coverable.
  for (std::uint32_t cp : chars) push(utf8_encode({cp}));
  for (std::uint32_t cp : chars) {
    push(Vocabulary::kContinuation + utf8_encode({cp}));
  }

  std::vector<std::pair<std::string, long>> ranked(word_freq.begin(),
                                                   word_freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [word, freq] : ranked) {
    if (freq < min_freq) continue;
    push(word);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> tokenize(const std::string& cleaned_text,
                                  const Vocabulary& vocab) {
  std::vector<std::string> out = {Vocabulary::kCls};
  for (const std::string& word : split_words(cleaned_text)) {
    const std::vector<std::uint32_t> cps = utf8_decode(word);
    std::vector<std::string> pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < cps.size()) {
      std::size_t end = cps.size();
      std::string match;
      for (; end > start; --end) {
        std::string cand = utf8_encode(
            std::vector<std::uint32_t>(cps.begin() + start, cps.begin() + end));
        if (start > 0) cand = Vocabulary::kContinuation + cand;
        if (vocab.contains(cand)) {
          match = cand;
          break;
        }
      }
      if (match.empty()) {
        bad = true;
        break;
      }
      pieces.push_back(match);
      start = end;
    }
    if (bad) {
      out.push_back(Vocabulary::kUnk);
    } else {
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
  }
  out.push_back(Vocabulary::kSep);
  return out;
}

TokenizedSequence encode(const std::vector<std::string>& tokens,
                         const Vocabulary& vocab, int max_len) {
  if (max_len < 2) throw ConfigError("encode: max_len must be >= 2");
  TokenizedSequence seq;
  seq.original_token_count = static_cast<int>(tokens.size());
  const std::size_t L = static_cast<std::size_t>(max_len);
  seq.ids.reserve(L);
  if (tokens.size() > L) {
    // Keep the head and force the final position to [SEP].
    for (std::size_t i = 0; i + 1 < L; ++i) {
      seq.ids.push_back(vocab.id_of(tokens[i]));
    }
    seq.ids.push_back(vocab.sep_id());
  } else {
    for (const std::string& t : tokens) seq.ids.push_back(vocab.id_of(t));
    seq.ids.resize(L, vocab.pad_id());
  }
  seq.mask.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    seq.mask[i] = seq.ids[i] != vocab.pad_id() ? 1 : 0;
  }
  return seq;
}

std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == vocab.pad_id()) continue;
    out.push_back(vocab.token_of(id));
  }
  return out;
}

}  // namespace multitox
