#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "workbench/error.hpp"
#include "workbench/robot_model.hpp"

namespace workbench::bus {

inline constexpr std::uint8_t kSync = 0xA5;
inline constexpr std::uint8_t kBroadcastId = 0xFE;
inline constexpr std::size_t kMaxPayload = 250;

enum class Opcode : std::uint8_t {
    ping = 0x01,
    read_pos = 0x02,
    write_goal = 0x03,
    torque = 0x04,
    read_current = 0x05,
    sync_write = 0x06,
    reply = 0x81,
    error = 0xFF,
};

struct BusFrame {
    std::uint8_t id = 0;
    std::uint8_t opcode = 0;  // raw byte; unknown values are representable on the wire
    std::vector<std::uint8_t> payload;

    bool operator==(const BusFrame&) const = default;
};

enum class FrameErrorKind { bad_sync, length_mismatch, crc_mismatch, payload_too_long };

class FrameError : public Error {
public:
    FrameError(FrameErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FrameErrorKind kind() const { return kind_; }

private:
    FrameErrorKind kind_;
};

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final xor).
std::uint16_t crc16(std::span<const std::uint8_t> bytes);

/// Layout: [0xA5][id][len = payload + 1][opcode][payload...][crc_hi][crc_lo], CRC over id..payload.
std::vector<std::uint8_t> encode_frame(const BusFrame& frame);

struct Decoded {
    BusFrame frame;
    std::vector<std::uint8_t> remainder;
};

/// Parses exactly one frame from the front of `bytes`. Throws FrameError.
Decoded decode_frame(std::span<const std::uint8_t> bytes);

// Payload helpers. Angles travel as signed 16-bit millirad, little-endian.
std::int16_t angle_to_wire(double radians);
double angle_from_wire(std::int16_t millirad);
void put_i16(std::vector<std::uint8_t>& out, std::int16_t v);
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
std::int16_t get_i16(std::span<const std::uint8_t> bytes, std::size_t at);
std::uint16_t get_u16(std::span<const std::uint8_t> bytes, std::size_t at);

BusFrame make_ping(std::uint8_t id);
BusFrame make_read_pos(std::uint8_t id);
BusFrame make_read_current(std::uint8_t id);
BusFrame make_write_goal(std::uint8_t id, double radians);
BusFrame make_torque(std::uint8_t id, bool enable);
BusFrame make_sync_write(std::span<const std::pair<std::uint8_t, double>> goals);

struct LogEntry {
    double time = 0.0;
    char direction = '>';  // '>' host to servo, '<' servo to host
    std::vector<std::uint8_t> bytes;
};

/// Simulated daisy chain. Every transact() is one bus tick: the request is handled,
/// then every servo advances by step_servo(dt).
class SimBus {
public:
    SimBus() = default;
    explicit SimBus(const robot::RobotModel& model);

    void attach(const robot::JointSpec& spec, const robot::ServoState& state);
    /// Unplugs a servo: later requests to it time out. Fault injection for tests.
    void detach(std::uint8_t id) { servos_.erase(id); }
    bool has(std::uint8_t id) const { return servos_.count(id) != 0; }
    std::vector<std::uint8_t> ids() const;

    std::optional<BusFrame> transact(const BusFrame& frame, double dt);

    /// Advance time without traffic.
    void advance(double dt);

    /// External force on a limp joint (puppet). Ignored while torque is on or the servo is
    /// absent; returns whether it moved.
    bool impose_position(std::uint8_t id, double radians);

    /// Direct view of one servo, bypassing the wire. Simulation/diagnostic use only.
    const robot::ServoState& state(std::uint8_t id) const;

    double time() const { return time_; }
    const std::vector<LogEntry>& log() const { return log_; }
    /// Lines of the form `<t> <dir> <hex>`.
    std::string hex_dump() const;
    void set_logging(bool enabled) { logging_ = enabled; }

private:
    struct Servo {
        robot::JointSpec spec;
        robot::ServoState state;
    };

    std::optional<BusFrame> handle(const BusFrame& frame);
    void record(char dir, const BusFrame& frame);

    std::map<std::uint8_t, Servo> servos_;
    std::vector<LogEntry> log_;
    double time_ = 0.0;
    bool logging_ = true;
};

}  // namespace workbench::bus
