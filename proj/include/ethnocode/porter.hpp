#pragma once

#include <string>
#include <string_view>

namespace ethnocode {

namespace detail {

/// Martin Porter's 1980 suffix-stripping algorithm over a lowercase ASCII
/// word. Words of one or two letters are returned unchanged.
class PorterStemmer {
 public:
  std::string operator()(std::string_view input) const {
    std::string w(input);
    if (w.size() <= 2) return w;
    step1a(w);
    step1b(w);
    step1c(w);
    step2(w);
    step3(w);
    step4(w);
    step5a(w);
    step5b(w);
    return w;
  }

 private:
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
  };

  static bool consonant(const std::string& w, std::size_t i) {
    switch (w[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !consonant(w, i - 1);
      default: return true;
    }
  }

  /// Number of VC sequences in w[0, len).
  static int measure(const std::string& w, std::size_t len) {
    int m = 0;
    std::size_t i = 0;
    while (i < len && consonant(w, i)) ++i;
    while (i < len) {
      while (i < len && !consonant(w, i)) ++i;
      if (i >= len) break;
      while (i < len && consonant(w, i)) ++i;
      ++m;
    }
    return m;
  }

  static bool has_vowel(const std::string& w, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i)
      if (!consonant(w, i)) return true;
    return false;
  }

  static bool double_consonant(const std::string& w, std::size_t len) {
    return len >= 2 && w[len - 1] == w[len - 2] && consonant(w, len - 1);
  }

  /// *o: stem ends consonant-vowel-consonant, last not w, x or y.
  static bool cvc(const std::string& w, std::size_t len) {
    if (len < 3) return false;
    if (!consonant(w, len - 3) || consonant(w, len - 2) || !consonant(w, len - 1)) return false;
    const char c = w[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  static bool ends_with(const std::string& w, std::string_view s) {
    return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
  }

  static void replace_suffix(std::string& w, std::size_t suffix_len, std::string_view repl) {
    w.resize(w.size() - suffix_len);
    w += repl;
  }

  /// First matching suffix wins; if its measure condition fails the word is
  /// left alone.
  template <std::size_t N>
  static void apply_measure_rules(std::string& w, const Rule (&rules)[N], int min_measure) {
    for (const auto& r : rules) {
      if (!ends_with(w, r.suffix)) continue;
      const std::size_t stem_len = w.size() - r.suffix.size();
      if (measure(w, stem_len) > min_measure) replace_suffix(w, r.suffix.size(), r.replacement);
      return;
    }
  }

  static void step1a(std::string& w) {
    if (ends_with(w, "sses")) replace_suffix(w, 4, "ss");
    else if (ends_with(w, "ies")) replace_suffix(w, 3, "i");
    else if (ends_with(w, "ss")) return;
    else if (ends_with(w, "s")) replace_suffix(w, 1, "");
  }

  static void step1b(std::string& w) {
    if (ends_with(w, "eed")) {
      if (measure(w, w.size() - 3) > 0) replace_suffix(w, 3, "ee");
      return;
    }
    std::size_t cut = 0;
    if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) cut = 2;
    else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) cut = 3;
    if (cut == 0) return;
    w.resize(w.size() - cut);
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w += 'e';
    } else if (double_consonant(w, w.size())) {
      const char c = w.back();
      if (c != 'l' && c != 's' && c != 'z') w.pop_back();
    } else if (measure(w, w.size()) == 1 && cvc(w, w.size())) {
      w += 'e';
    }
  }

  static void step1c(std::string& w) {
    if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w.back() = 'i';
  }

  static void step2(std::string& w) {
    static constexpr Rule rules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},  {"izer", "ize"},
        {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},      {"ousli", "ous"},
        {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},   {"iveness", "ive"},
        {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"},
    };
    apply_measure_rules(w, rules, 0);
  }

  static void step3(std::string& w) {
    static constexpr Rule rules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""}, {"ness", ""},
    };
    apply_measure_rules(w, rules, 0);
  }

  static void step4(std::string& w) {
    static constexpr std::string_view suffixes[] = {
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize",
    };
    for (auto s : suffixes) {
      if (!ends_with(w, s)) continue;
      const std::size_t stem_len = w.size() - s.size();
      bool ok = measure(w, stem_len) > 1;
      if (ok && s == "ion") ok = stem_len > 0 && (w[stem_len - 1] == 's' || w[stem_len - 1] == 't');
      if (ok) w.resize(stem_len);
      return;
    }
  }

  static void step5a(std::string& w) {
    if (!ends_with(w, "e")) return;
    const std::size_t stem_len = w.size() - 1;
    const int m = measure(w, stem_len);
    if (m > 1 || (m == 1 && !cvc(w, stem_len))) w.pop_back();
  }

  static void step5b(std::string& w) {
    if (measure(w, w.size()) > 1 && double_consonant(w, w.size()) && w.back() == 'l') w.pop_back();
  }
};

}  // namespace detail

/// Single pass of the Porter algorithm. Non-alphabetic input is returned
/// unchanged.
inline std::string porter_stem(std::string_view word) {
  for (char c : word)
    if (c < 'a' || c > 'z') return std::string(word);
  return detail::PorterStemmer{}(word);
}

}  // namespace ethnocode
