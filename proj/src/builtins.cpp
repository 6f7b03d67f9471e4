#include "streamon/builtins.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

#ifndef STREAMON_DEFAULT_ASSET_DIR
#define STREAMON_DEFAULT_ASSET_DIR "assets"
#endif

namespace streamon {

const std::vector<std::string>& list_builtins() {
    static const std::vector<std::string> names = {
        "conficker", "ddos", "entropy", "p2p", "portknock",
    };
    return names;
}

bool is_builtin(const std::string& name) {
    const auto& all = list_builtins();
    return std::find(all.begin(), all.end(), name) != all.end();
}

std::string asset_dir() {
    if (const char* env = std::getenv("STREAMON_ASSET_DIR"); env && *env) return env;
    return STREAMON_DEFAULT_ASSET_DIR;
}

std::string builtin_program_path(const std::string& name) {
    return asset_dir() + "/programs/" + name + ".json";
}

Program load_builtin(const std::string& name,
                     const std::map<std::string, double>& overrides) {
    if (!is_builtin(name))
        throw std::out_of_range("unknown builtin program '" + name + "'");
    return parse_program_file(builtin_program_path(name), overrides);
}

}  // namespace streamon
