#include "fineas/data_model.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <charconv>
#include <cmath>
#include <cstdlib>

namespace fineas {

namespace {

std::string nfc(const std::string& utf8) {
  UErrorCode ec = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(ec);
  if (U_FAILURE(ec)) return utf8;
  const icu::UnicodeString in = icu::UnicodeString::fromUTF8(utf8);
  icu::UnicodeString out = norm->normalize(in, ec);
  if (U_FAILURE(ec)) return utf8;
  std::string result;
  out.toUTF8String(result);
  return result;
}

}  // namespace

std::string normalize_headline(const std::string& text) {
  const icu::UnicodeString in = icu::UnicodeString::fromUTF8(text);
  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < in.length();) {
    const UChar32 cp = in.char32At(i);
    i += U16_LENGTH(cp);
    if (u_isUWhiteSpace(cp)) {
      if (collapsed.length() > 0) pending_space = true;
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar32>(' '));
      pending_space = false;
    }
    collapsed.append(cp);
  }
  std::string utf8;
  collapsed.toUTF8String(utf8);
  return nfc(utf8);
}

std::variant<NewsEvent, RowError> validate_event(const FieldMap& raw) {
  for (const char* key :
       {kFieldTimestamp, kFieldEntity, kFieldHeadline, kFieldSentiment}) {
    if (raw.find(key) == raw.end()) {
      return RowError{Errc::MissingField, key,
                      std::string("missing field '") + key + "'"};
    }
  }

  const std::string& ts_raw = raw.at(kFieldTimestamp);
  const auto ts = parse_utc(ts_raw);
  if (!ts) {
    return RowError{Errc::BadTimestamp, kFieldTimestamp,
                    "not a valid UTC instant: '" + ts_raw + "'"};
  }

  const std::string headline = normalize_headline(raw.at(kFieldHeadline));
  if (headline.empty()) {
    return RowError{Errc::EmptyHeadline, kFieldHeadline,
                    "headline empty after whitespace normalization"};
  }

  const std::string& score_raw = raw.at(kFieldSentiment);
  const char* begin = score_raw.c_str();
  char* end = nullptr;
  const double score = std::strtod(begin, &end);
  if (end != begin + score_raw.size() || score_raw.empty() ||
      !std::isfinite(score)) {
    return RowError{Errc::ScoreOutOfRange, kFieldSentiment,
                    "not a finite number: '" + score_raw + "'"};
  }
  if (score < -1.0 || score > 1.0) {
    return RowError{Errc::ScoreOutOfRange, kFieldSentiment,
                    "sentiment " + score_raw + " outside [-1, 1]"};
  }

  NewsEvent e;
  e.timestamp = *ts;
  e.entity_id = raw.at(kFieldEntity);
  e.headline = headline;
  e.sentiment = score;
  return e;
}

std::string format_sentiment(double s) {
  // Shortest representation that round-trips the double exactly, so
  // serialize -> validate yields an equal record.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), s);
  return std::string(buf, res.ptr);
}

FieldMap to_fields(const NewsEvent& e) {
  return FieldMap{{kFieldTimestamp, format_utc(e.timestamp)},
                  {kFieldEntity, e.entity_id},
                  {kFieldHeadline, e.headline},
                  {kFieldSentiment, format_sentiment(e.sentiment)}};
}

}  // namespace fineas
