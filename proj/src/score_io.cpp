#include "voicesep/score_io.h"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"
#include "voicesep/errors.h"

namespace voicesep {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

template <typename T>
T require_int(const json& obj, const char* key, const std::string& field) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(field + "." + key, "missing");
  if (!it->is_number_integer()) throw ValidationError(field + "." + key, "must be an integer");
  return it->get<T>();
}

std::vector<Measure> parse_measures(const json& doc) {
  auto it = doc.find("measures");
  if (it == doc.end() || !it->is_array()) throw ValidationError("measures", "must be an array");
  std::vector<Measure> measures;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const auto& m = (*it)[i];
    const std::string field = "measures[" + std::to_string(i) + "]";
    if (!m.is_object()) throw ValidationError(field, "must be an object");
    measures.push_back({require_int<int>(m, "index", field), require_int<Tick>(m, "onset", field),
                        require_int<Tick>(m, "duration", field)});
  }
  return measures;
}

int parse_divisions(const json& doc) {
  auto it = doc.find("divisions");
  if (it == doc.end() || !it->is_number_integer()) {
    throw ValidationError("divisions", "must be an integer");
  }
  return it->get<int>();
}

json parse_json(std::string_view raw) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

long long parse_cell(const std::string& cell, const std::string& field) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(field, "expected an integer, got '" + cell + "'");
  }
}

}  // namespace

Score parse_score(std::string_view raw) {
  const json doc = parse_json(raw);
  if (!doc.is_object()) throw ParseError("score document must be a JSON object");

  Score score;
  score.divisions = parse_divisions(doc);
  score.measures = parse_measures(doc);

  auto notes = doc.find("notes");
  if (notes == doc.end() || !notes->is_array()) throw ValidationError("notes", "must be an array");
  for (std::size_t i = 0; i < notes->size(); ++i) {
    const auto& n = (*notes)[i];
    const std::string field = "notes[" + std::to_string(i) + "]";
    if (!n.is_object()) throw ValidationError(field, "must be an object");
    Note note;
    auto id = n.find("id");
    if (id == n.end() || !id->is_string()) throw ValidationError(field + ".id", "must be a string");
    note.id = id->get<std::string>();
    note.onset = require_int<Tick>(n, "onset", field);
    note.duration = require_int<Tick>(n, "duration", field);
    note.pitch = require_int<int>(n, "pitch", field);
    auto voice = n.find("voice");
    if (voice != n.end() && !voice->is_null()) {
      if (!voice->is_number_integer()) throw ValidationError(field + ".voice", "must be an integer or null");
      note.voice = voice->get<int>();
    }
    score.notes.push_back(std::move(note));
  }
  score.validate();
  return score;
}

std::string serialize_score(const Score& score) {
  Score sorted = score;
  std::sort(sorted.notes.begin(), sorted.notes.end(), canonical_note_less);

  ordered_json doc;
  doc["divisions"] = sorted.divisions;
  doc["measures"] = ordered_json::array();
  for (const auto& m : sorted.measures) {
    ordered_json jm;
    jm["index"] = m.index;
    jm["onset"] = m.onset;
    jm["duration"] = m.duration;
    doc["measures"].push_back(std::move(jm));
  }
  doc["notes"] = ordered_json::array();
  for (const auto& n : sorted.notes) {
    ordered_json jn;
    jn["id"] = n.id;
    jn["onset"] = n.onset;
    jn["duration"] = n.duration;
    jn["pitch"] = n.pitch;
    jn["voice"] = n.voice ? ordered_json(*n.voice) : ordered_json(nullptr);
    doc["notes"].push_back(std::move(jn));
  }
  return doc.dump(2) + "\n";
}

Score parse_score_csv(std::string_view notes_csv, std::string_view measures_json) {
  const json sidecar = parse_json(measures_json);
  if (!sidecar.is_object()) throw ParseError("measure sidecar must be a JSON object");

  Score score;
  score.divisions = parse_divisions(sidecar);
  score.measures = parse_measures(sidecar);

  std::istringstream in{std::string(notes_csv)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("CSV is empty");
  std::vector<std::string> header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  if (header != std::vector<std::string>{"id", "onset", "duration", "pitch", "voice"}) {
    throw ParseError("CSV header must be 'id,onset,duration,pitch,voice'");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const std::string field = "notes[" + std::to_string(row++) + "]";
    auto cells = split(line, ',');
    if (cells.size() != 5) throw ParseError(field + ": expected 5 columns");
    for (auto& c : cells) c = trim(c);
    Note note;
    note.id = cells[0];
    note.onset = parse_cell(cells[1], field + ".onset");
    note.duration = parse_cell(cells[2], field + ".duration");
    note.pitch = static_cast<int>(parse_cell(cells[3], field + ".pitch"));
    if (!cells[4].empty()) note.voice = static_cast<int>(parse_cell(cells[4], field + ".voice"));
    score.notes.push_back(std::move(note));
  }
  score.validate();
  return score;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

Score load_score(const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    auto sidecar = path;
    sidecar.replace_extension(".measures.json");
    return parse_score_csv(read_file(path), read_file(sidecar));
  }
  return parse_score(read_file(path));
}

}  // namespace voicesep
