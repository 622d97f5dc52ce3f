#include "workbench/server.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <map>
#include <memory>

namespace workbench::service {

namespace asio = boost::asio;
using asio::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, Service& service) : socket_(std::move(socket)), service_(service) {}

    void start() { read(); }

private:
    struct Subscription {
        std::unique_ptr<asio::steady_timer> timer;
        std::chrono::steady_clock::duration period;
        std::int64_t remaining = -1;  // -1: until unsubscribed
        std::int64_t pushes = 0;
    };

    void read() {
        asio::async_read_until(socket_, buffer_, '\n', [self = shared_from_this()](auto ec, std::size_t) {
            if (ec) {
                self->close();
                return;
            }
            std::istream in(&self->buffer_);
            std::string line;
            std::getline(in, line);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) self->on_line(line);
            self->read();
        });
    }

    void on_line(const std::string& line) {
        json request;
        try {
            request = json::parse(line);
        } catch (const json::exception&) {
            send(service_.handle_line(line));
            return;
        }
        const auto type = request.is_object() ? request.value("type", std::string()) : std::string();
        if (type == "subscribe_state" || type == "unsubscribe_state") {
            const std::int64_t id = request.value("id", std::int64_t{-1});
            if (id < 0) {
                send(error_reply(id, "malformed message: missing integer id"));
                return;
            }
            const json payload = request.value("payload", json::object());
            try {
                if (type == "subscribe_state") {
                    subscribe(id, payload);
                } else {
                    unsubscribe(id, payload);
                }
            } catch (const std::exception& e) {
                send(error_reply(id, e.what()));
            }
            return;
        }
        send(service_.handle(request));
    }

    void subscribe(std::int64_t id, const json& payload) {
        const double rate = payload.value("rate_hz", 20.0);
        if (!(rate > 0.0 && rate <= 1000.0)) throw ValidationError("rate_hz must be in (0, 1000]");
        if (subs_.count(id)) throw ValidationError("subscription " + std::to_string(id) + " already active");
        Subscription sub;
        sub.timer = std::make_unique<asio::steady_timer>(socket_.get_executor());
        sub.period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / rate));
        sub.remaining = payload.value("count", std::int64_t{-1});
        sub.timer->expires_after(sub.period);
        subs_[id] = std::move(sub);
        send(make_reply("subscribe_state", id, {{"subscription", id}, {"rate_hz", rate}}));
        arm(id);
    }

    void arm(std::int64_t id) {
        auto it = subs_.find(id);
        if (it == subs_.end()) return;
        it->second.timer->async_wait([self = shared_from_this(), id](auto ec) {
            if (ec) return;
            auto sit = self->subs_.find(id);
            if (sit == self->subs_.end()) return;
            auto& sub = sit->second;
            self->send({{"type", "state"}, {"id", id}, {"payload", self->service_.state_snapshot()}});
            ++sub.pushes;
            if (sub.remaining > 0 && --sub.remaining == 0) {
                self->end(id);
                return;
            }
            sub.timer->expires_at(sub.timer->expiry() + sub.period);
            self->arm(id);
        });
    }

    void end(std::int64_t id) {
        auto it = subs_.find(id);
        if (it == subs_.end()) return;
        const auto pushes = it->second.pushes;
        it->second.timer->cancel();
        subs_.erase(it);
        send({{"type", "subscribe_state_end"}, {"id", id}, {"payload", {{"pushes", pushes}}}});
    }

    void unsubscribe(std::int64_t id, const json& payload) {
        const std::int64_t target = payload.value("subscription", std::int64_t{-1});
        if (!subs_.count(target)) throw ValidationError("no active subscription " + std::to_string(target));
        end(target);
        send(make_reply("unsubscribe_state", id, {{"subscription", target}}));
    }

    void send(const json& message) {
        const bool idle = outbox_.empty();
        outbox_.push_back(message.dump() + "\n");
        if (idle) write();
    }

    void write() {
        asio::async_write(socket_, asio::buffer(outbox_.front()), [self = shared_from_this()](auto ec, std::size_t) {
            if (ec) {
                self->close();
                return;
            }
            self->outbox_.pop_front();
            if (!self->outbox_.empty()) self->write();
        });
    }

    void close() {
        for (auto& [id, sub] : subs_) sub.timer->cancel();
        subs_.clear();
        boost::system::error_code ignored;
        socket_.close(ignored);
    }

    tcp::socket socket_;
    Service& service_;
    asio::streambuf buffer_;
    std::deque<std::string> outbox_;
    std::map<std::int64_t, Subscription> subs_;
};

}  // namespace

Server::Server(Service& service, std::uint16_t port, double tick_hz)
    : service_(service),
      acceptor_(io_, tcp::endpoint(tcp::v4(), port)),
      tick_timer_(io_),
      tick_period_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(1.0 / tick_hz))) {
    accept();
    tick_timer_.expires_after(tick_period_);
    schedule_tick();
}

std::uint16_t Server::port() const { return acceptor_.local_endpoint().port(); }

void Server::run() { io_.run(); }

void Server::stop() {
    asio::post(io_, [this] {
        boost::system::error_code ignored;
        acceptor_.close(ignored);
        tick_timer_.cancel();
        io_.stop();
    });
}

void Server::accept() {
    acceptor_.async_accept([this](auto ec, tcp::socket socket) {
        if (ec) return;
        spdlog::debug("client connected from {}", socket.remote_endpoint().address().to_string());
        std::make_shared<Connection>(std::move(socket), service_)->start();
        accept();
    });
}

void Server::schedule_tick() {
    tick_timer_.async_wait([this](auto ec) {
        if (ec) return;
        service_.tick();
        tick_timer_.expires_at(tick_timer_.expiry() + tick_period_);
        schedule_tick();
    });
}

}  // namespace workbench::service
