#pragma once

// Fixed-step closed-loop simulation of the drive: machine, converter,
// predictive controller, detectors and reconfiguration state machine.

#include "ftdrive/analysis.hpp"
#include "ftdrive/fault.hpp"
#include "ftdrive/scenario.hpp"
#include "ftdrive/trace.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ftdrive::sim {

struct DetectionRecord {
    std::string target;
    std::string kind;
    double fault_time = 0.0;
    std::optional<double> detection_time;
    std::optional<std::string> detected_as;
    std::optional<double> fundamental_hz; ///< detector frequency estimate at detection
};

struct FuseRecord {
    char leg = 'a';
    double shoot_through_start = 0.0; ///< start of the episode that blew the fuse [s]
    double blow_time = 0.0;           ///< end of the step in which I^2t reached the rating [s]
    double accumulated_i2t = 0.0;
};

struct Summary {
    std::string scenario;
    std::string backend;
    long steps = 0;
    double dt = 0.0;
    double duration = 0.0;
    std::optional<double> settling_time; ///< speed within 5% of reference until the first fault
    double final_speed = 0.0;
    std::vector<fault::ModeChange> mode_log;
    std::vector<DetectionRecord> detections;
    std::vector<std::pair<double, std::string>> classifications; ///< every device named by the detector
    int false_positives = 0;
    std::vector<FuseRecord> fuses;
    std::map<std::string, int> warnings;
    std::optional<NegativeSequenceReport> analysis;
    std::optional<std::string> analysis_error;
    bool aborted = false;
    std::string abort_diagnostic;
};

struct RunResult {
    Trace trace;
    Summary summary;
};

/// Deterministic: the same scenario always yields a bit-identical trace.
/// Integration divergence and invalid transitions abort the run; the partial
/// trace and a diagnostic are returned.
RunResult run_scenario(const Scenario& s);

/// Rated peak phase current implied by Tn and psi_n.
double rated_peak_current(const machine::MachineParams& m);

std::string summary_to_json(const Summary& s);
std::string analysis_to_json(const NegativeSequenceReport& report);

struct CheckItem {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Scenario-level acceptance checks applicable to the run.
std::vector<CheckItem> check_run(const Scenario& s, const Summary& summary);

} // namespace ftdrive::sim
