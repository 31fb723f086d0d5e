// Reading and writing the canonical score formats (JSON, and CSV with a
// sidecar measure file).

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voicesep/score.h"

namespace voicesep {

/// Parses a canonical score JSON document and validates it.
Score parse_score(std::string_view raw);

/// Normalized JSON form: canonical note order, fixed key order, 2-space
/// indent, trailing newline. parse_score(serialize_score(s)) == s.
std::string serialize_score(const Score& score);

/// CSV notes (header `id,onset,duration,pitch,voice`, empty voice = null)
/// plus a JSON sidecar `{"divisions": int, "measures": [...]}`.
Score parse_score_csv(std::string_view notes_csv, std::string_view measures_json);

/// Loads a score from disk. `.csv` files read their measures from
/// `<stem>.measures.json` next to them; everything else is parsed as JSON.
Score load_score(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace voicesep
