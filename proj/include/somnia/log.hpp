#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace somnia::log {

enum class Level : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from RADAR_SOMNIA_LOG (error|warn|info|debug), default warn.
inline Level threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("RADAR_SOMNIA_LOG");
        if (!env) return Level::Warn;
        if (!std::strcmp(env, "error")) return Level::Error;
        if (!std::strcmp(env, "warn")) return Level::Warn;
        if (!std::strcmp(env, "info")) return Level::Info;
        if (!std::strcmp(env, "debug")) return Level::Debug;
        return Level::Warn;
    }();
    return lvl;
}

inline void write(Level lvl, const char* tag, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

inline void error(const std::string& m) { write(Level::Error, "error", m); }
inline void warn(const std::string& m) { write(Level::Warn, "warn", m); }
inline void info(const std::string& m) { write(Level::Info, "info", m); }
inline void debug(const std::string& m) { write(Level::Debug, "debug", m); }

}  // namespace somnia::log
