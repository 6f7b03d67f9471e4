#pragma once

#include <map>
#include <string>
#include <vector>

#include "streamon/program.hpp"

namespace streamon {

// Names of the detection programs shipped under assets/programs/, sorted.
const std::vector<std::string>& list_builtins();

// True if `name` names a shipped program.
bool is_builtin(const std::string& name);

// Directory the shipped documents are loaded from: $STREAMON_ASSET_DIR when
// set and non-empty, otherwise the directory baked in at build time.
std::string asset_dir();

// Full path of the JSON document for one shipped program (no existence check).
std::string builtin_program_path(const std::string& name);

// Loads, parses and validates a shipped program, applying parameter overrides.
// Throws std::out_of_range for an unknown name.
Program load_builtin(const std::string& name,
                     const std::map<std::string, double>& overrides = {});

}  // namespace streamon
