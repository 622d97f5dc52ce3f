#include "workbench/servo_bus.hpp"

#include <boost/crc.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace workbench::bus {

std::uint16_t crc16(std::span<const std::uint8_t> bytes) {
    boost::crc_optimal<16, 0x1021, 0xFFFF, 0, false, false> crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return static_cast<std::uint16_t>(crc.checksum());
}

std::vector<std::uint8_t> encode_frame(const BusFrame& frame) {
    if (frame.payload.size() > kMaxPayload) {
        throw FrameError(FrameErrorKind::payload_too_long,
                         "payload of " + std::to_string(frame.payload.size()) + " bytes exceeds 250");
    }
    std::vector<std::uint8_t> out;
    out.reserve(frame.payload.size() + 6);
    out.push_back(kSync);
    out.push_back(frame.id);
    out.push_back(static_cast<std::uint8_t>(frame.payload.size() + 1));
    out.push_back(frame.opcode);
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    const auto crc = crc16(std::span(out).subspan(1));
    out.push_back(static_cast<std::uint8_t>(crc >> 8));
    out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
    return out;
}

Decoded decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.empty() || bytes[0] != kSync) throw FrameError(FrameErrorKind::bad_sync, "bad sync byte");
    if (bytes.size() < 3) throw FrameError(FrameErrorKind::length_mismatch, "truncated frame header");
    const std::size_t length = bytes[2];
    if (length == 0) throw FrameError(FrameErrorKind::length_mismatch, "length byte must count the opcode");
    const std::size_t total = 3 + length + 2;
    if (bytes.size() < total) {
        throw FrameError(FrameErrorKind::length_mismatch, "frame needs " + std::to_string(total) + " bytes, have " +
                                                              std::to_string(bytes.size()));
    }
    const auto body = bytes.subspan(1, 2 + length);
    const std::uint16_t expected = static_cast<std::uint16_t>((bytes[total - 2] << 8) | bytes[total - 1]);
    if (crc16(body) != expected) throw FrameError(FrameErrorKind::crc_mismatch, "CRC mismatch");

    Decoded d;
    d.frame.id = bytes[1];
    d.frame.opcode = bytes[3];
    d.frame.payload.assign(bytes.begin() + 4, bytes.begin() + 3 + static_cast<std::ptrdiff_t>(length));
    d.remainder.assign(bytes.begin() + static_cast<std::ptrdiff_t>(total), bytes.end());
    return d;
}

std::int16_t angle_to_wire(double radians) {
    const double mrad = std::round(radians * 1000.0);
    if (mrad < -32768.0 || mrad > 32767.0) throw ValidationError("angle does not fit the 16-bit wire format");
    return static_cast<std::int16_t>(mrad);
}

double angle_from_wire(std::int16_t millirad) { return millirad / 1000.0; }

void put_i16(std::vector<std::uint8_t>& out, std::int16_t v) { put_u16(out, static_cast<std::uint16_t>(v)); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16(std::span<const std::uint8_t> bytes, std::size_t at) {
    return static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8));
}

std::int16_t get_i16(std::span<const std::uint8_t> bytes, std::size_t at) {
    return static_cast<std::int16_t>(get_u16(bytes, at));
}

BusFrame make_ping(std::uint8_t id) { return {id, static_cast<std::uint8_t>(Opcode::ping), {}}; }
BusFrame make_read_pos(std::uint8_t id) { return {id, static_cast<std::uint8_t>(Opcode::read_pos), {}}; }
BusFrame make_read_current(std::uint8_t id) { return {id, static_cast<std::uint8_t>(Opcode::read_current), {}}; }

BusFrame make_write_goal(std::uint8_t id, double radians) {
    BusFrame f{id, static_cast<std::uint8_t>(Opcode::write_goal), {}};
    put_i16(f.payload, angle_to_wire(radians));
    return f;
}

BusFrame make_torque(std::uint8_t id, bool enable) {
    return {id, static_cast<std::uint8_t>(Opcode::torque), {static_cast<std::uint8_t>(enable ? 1 : 0)}};
}

BusFrame make_sync_write(std::span<const std::pair<std::uint8_t, double>> goals) {
    BusFrame f{kBroadcastId, static_cast<std::uint8_t>(Opcode::sync_write), {}};
    for (const auto& [id, angle] : goals) {
        f.payload.push_back(id);
        put_i16(f.payload, angle_to_wire(angle));
    }
    return f;
}

SimBus::SimBus(const robot::RobotModel& model) {
    for (const auto& j : model.joints()) {
        robot::ServoState s;
        s.position = j.clamp(0.0);
        s.goal = s.position;
        attach(j, s);
    }
}

void SimBus::attach(const robot::JointSpec& spec, const robot::ServoState& state) {
    servos_[static_cast<std::uint8_t>(spec.id)] = Servo{spec, state};
}

std::vector<std::uint8_t> SimBus::ids() const {
    std::vector<std::uint8_t> out;
    for (const auto& [id, s] : servos_) out.push_back(id);
    return out;
}

const robot::ServoState& SimBus::state(std::uint8_t id) const {
    auto it = servos_.find(id);
    if (it == servos_.end()) throw ValidationError("no servo with id " + std::to_string(id));
    return it->second.state;
}

bool SimBus::impose_position(std::uint8_t id, double radians) {
    auto it = servos_.find(id);
    if (it == servos_.end()) return false;
    auto& s = it->second;
    if (s.state.torque_enabled) return false;
    s.state.position = s.spec.clamp(radians);
    return true;
}

void SimBus::record(char dir, const BusFrame& frame) {
    if (logging_) log_.push_back({time_, dir, encode_frame(frame)});
}

std::optional<BusFrame> SimBus::transact(const BusFrame& frame, double dt) {
    record('>', frame);
    auto reply = handle(frame);
    if (reply) record('<', *reply);
    advance(dt);
    return reply;
}

void SimBus::advance(double dt) {
    if (!(dt > 0.0)) throw ValidationError("bus tick needs dt > 0");
    for (auto& [id, s] : servos_) s.state = robot::step_servo(s.spec, s.state, dt);
    time_ += dt;
}

namespace {

// A servo re-engaging holds where the puppet left it.
void set_torque(robot::ServoState& state, bool enable) {
    if (enable && !state.torque_enabled) state.goal = state.position;
    state.torque_enabled = enable;
}

}  // namespace

std::optional<BusFrame> SimBus::handle(const BusFrame& frame) {
    const auto op = static_cast<Opcode>(frame.opcode);
    const bool broadcast = frame.id == kBroadcastId;

    if (op == Opcode::sync_write) {
        if (frame.payload.size() % 3 != 0) return std::nullopt;
        for (std::size_t i = 0; i < frame.payload.size(); i += 3) {
            auto it = servos_.find(frame.payload[i]);
            if (it != servos_.end()) it->second.state.goal = angle_from_wire(get_i16(frame.payload, i + 1));
        }
        return std::nullopt;
    }

    if (broadcast) {
        for (auto& [id, s] : servos_) {
            if (op == Opcode::torque && frame.payload.size() == 1) {
                set_torque(s.state, frame.payload[0] != 0);
            } else if (op == Opcode::write_goal && frame.payload.size() == 2) {
                s.state.goal = angle_from_wire(get_i16(frame.payload, 0));
            }
        }
        return std::nullopt;
    }

    auto it = servos_.find(frame.id);
    if (it == servos_.end()) return std::nullopt;
    auto& s = it->second;
    BusFrame reply{frame.id, static_cast<std::uint8_t>(Opcode::reply), {}};
    const BusFrame error{frame.id, static_cast<std::uint8_t>(Opcode::error), {frame.opcode}};

    switch (op) {
        case Opcode::ping:
            return reply;
        case Opcode::read_pos:
            put_i16(reply.payload, angle_to_wire(s.state.position));
            return reply;
        case Opcode::read_current: {
            const double ma = std::min(std::round(s.state.current_estimate * 1000.0), 65535.0);
            put_u16(reply.payload, static_cast<std::uint16_t>(ma));
            return reply;
        }
        case Opcode::write_goal:
            if (frame.payload.size() != 2) return error;
            s.state.goal = angle_from_wire(get_i16(frame.payload, 0));
            return reply;
        case Opcode::torque:
            if (frame.payload.size() != 1) return error;
            set_torque(s.state, frame.payload[0] != 0);
            return reply;
        default:
            return error;
    }
}

std::string SimBus::hex_dump() const {
    std::ostringstream out;
    for (const auto& e : log_) {
        char t[32];
        std::snprintf(t, sizeof t, "%.6f", e.time);
        out << t << ' ' << e.direction << ' ';
        for (auto b : e.bytes) {
            char h[3];
            std::snprintf(h, sizeof h, "%02X", b);
            out << h;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace workbench::bus
