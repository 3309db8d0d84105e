#pragma once

#include <iostream>
#include <string_view>

namespace efbg::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

/// Read once from EFBG_LOG (quiet|warn|info|debug); defaults to warn.
Level level();
void set_level(Level l);

void write(Level l, std::string_view message);

inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void debug(std::string_view m) { write(Level::Debug, m); }

}  // namespace efbg::log
