// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/data/records.hpp"

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "tokreg/errors.hpp"

namespace tokreg::data {
namespace {

using nlohmann::json;

std::string required_string(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw ParseError("line " + std::to_string(line) + ": missing field \"" + field + "\"");
  }
  if (!it->is_string()) {
    throw ParseError("line " + std::to_string(line) + ": field \"" + field +
                     "\" must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

void PreferenceRecord::validate() const {
  if (id.empty()) throw ParseError("record has an empty id");
  if (instruction.empty() || chosen.empty() || rejected.empty()) {
    throw ParseError("record " + id + ": instruction, chosen and rejected must be non-empty");
  }
  if (chosen == rejected) throw ParseError("record " + id + ": chosen equals rejected");
  if (planted_span) {
    if (planted_span->start >= planted_span->end || planted_span->end > rejected.size()) {
      throw ParseError("record " + id + ": planted span [" + std::to_string(planted_span->start) +
                       "," + std::to_string(planted_span->end) + ") outside rejected text");
    }
  }
}

std::vector<PreferenceRecord> parse_records(std::istream& in) {
  std::vector<PreferenceRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ParseError("line " + std::to_string(line_no) + ": not an object");
    PreferenceRecord r;
    r.id = required_string(obj, "id", line_no);
    r.instruction = required_string(obj, "instruction", line_no);
    r.chosen = required_string(obj, "chosen", line_no);
    r.rejected = required_string(obj, "rejected", line_no);
    if (auto it = obj.find("planted_span"); it != obj.end() && !it->is_null()) {
      if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() ||
          !(*it)[1].is_number_unsigned()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": field \"planted_span\" must be [start, end]");
      }
      r.planted_span = Span{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
    }
    try {
      r.validate();
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.id).second) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate id \"" + r.id + "\"");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<PreferenceRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset " + path.string());
  return parse_records(in);
}

std::string record_to_json_line(const PreferenceRecord& record) {
  json obj = {{"id", record.id},
              {"instruction", record.instruction},
              {"chosen", record.chosen},
              {"rejected", record.rejected}};
  if (record.planted_span) {
    obj["planted_span"] = {record.planted_span->start, record.planted_span->end};
  }
  return obj.dump();
}

void write_records(const std::filesystem::path& path, std::span<const PreferenceRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TokenSeq make_prompt(std::string_view instruction) {
  TokenSeq t{kBos};
  append_encoded(t, instruction);
  t.push_back(kSep);
  return t;
}

TokenSeq make_response(std::string_view answer) {
  TokenSeq t = encode(answer);
  t.push_back(kEos);
  return t;
}

PreferencePair tokenize_record(const PreferenceRecord& record, std::size_t context_len) {
  PreferencePair p;
  p.id = record.id;
  p.prompt = make_prompt(record.instruction);
  p.chosen = make_response(record.chosen);
  p.rejected = make_response(record.rejected);
  const std::size_t longest = p.prompt.size() + std::max(p.chosen.size(), p.rejected.size());
  if (longest > context_len) {
    throw LengthError("record " + record.id + ": " + std::to_string(longest) +
                      " tokens exceed context length " + std::to_string(context_len));
  }
  // Byte tokenizer: byte offsets are token indices within the response.
  p.planted_span = record.planted_span;
  return p;
}

std::vector<PreferencePair> tokenize_records(std::span<const PreferenceRecord> records,
                                             std::size_t context_len) {
  std::vector<PreferencePair> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tokenize_record(r, context_len));
  return out;
}

}  // namespace tokreg::data
