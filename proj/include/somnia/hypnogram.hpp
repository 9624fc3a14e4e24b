#pragma once

#include <string>
#include <vector>

namespace somnia {

// Four-class staging per the AASM-merged scheme: Light = N1+N2, Deep = N3.
// Unscored marks epochs excluded from training and metrics. Wake must stay
// index 0 so that argmax tie-breaking resolves toward Wake.
enum class Stage : int { Wake = 0, Light = 1, Deep = 2, REM = 3, Unscored = 4 };

constexpr int kNumStages = 4;          // scorable classes
constexpr double kEpochSeconds = 30.0;
constexpr double kEpochMinutes = 0.5;

inline bool is_sleep(Stage s) {
    return s == Stage::Light || s == Stage::Deep || s == Stage::REM;
}
inline bool is_scored(Stage s) { return s != Stage::Unscored; }

inline char stage_code(Stage s) {
    switch (s) {
        case Stage::Wake: return 'W';
        case Stage::Light: return 'L';
        case Stage::Deep: return 'D';
        case Stage::REM: return 'R';
        default: return 'U';
    }
}

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Wake: return "Wake";
        case Stage::Light: return "Light";
        case Stage::Deep: return "Deep";
        case Stage::REM: return "REM";
        default: return "Unscored";
    }
}

// One night of per-epoch stages on a fixed 30 s grid.
struct Hypnogram {
    std::vector<Stage> stages;
    double start_clock = 0.0;  // seconds since midnight of epoch 0

    int num_epochs() const { return static_cast<int>(stages.size()); }
    double epoch_start_clock(int e) const { return start_clock + e * kEpochSeconds; }
};

// Summary statistics derived from a hypnogram (all minutes except se_percent).
// WASO counts wake strictly between sleep onset and the final sleep epoch.
struct SleepSummary {
    double tib_min = 0.0;
    double tst_min = 0.0;
    double se_percent = 0.0;  // 100 * TST / TIB
    double waso_min = 0.0;
    double sol_min = 0.0;     // sleep onset latency from record start
    bool has_sleep = false;
};

inline SleepSummary summarize_sleep(const Hypnogram& h) {
    SleepSummary s;
    const int n = h.num_epochs();
    s.tib_min = n * kEpochMinutes;
    int first_sleep = -1, last_sleep = -1;
    for (int e = 0; e < n; ++e) {
        if (is_sleep(h.stages[e])) {
            s.tst_min += kEpochMinutes;
            if (first_sleep < 0) first_sleep = e;
            last_sleep = e;
        }
    }
    s.has_sleep = first_sleep >= 0;
    if (s.has_sleep) {
        s.sol_min = first_sleep * kEpochMinutes;
        for (int e = first_sleep; e <= last_sleep; ++e)
            if (h.stages[e] == Stage::Wake) s.waso_min += kEpochMinutes;
    }
    s.se_percent = s.tib_min > 0.0 ? 100.0 * s.tst_min / s.tib_min : 0.0;
    return s;
}

// Per-stage total duration in minutes, indexed by Stage (scorable classes).
inline std::vector<double> stage_durations_min(const Hypnogram& h) {
    std::vector<double> d(kNumStages, 0.0);
    for (Stage st : h.stages)
        if (is_scored(st)) d[static_cast<int>(st)] += kEpochMinutes;
    return d;
}

}  // namespace somnia
