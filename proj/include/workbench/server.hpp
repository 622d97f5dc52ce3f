#pragma once

#include <boost/asio.hpp>

#include <cstdint>

#include "workbench/service.hpp"

namespace workbench::service {

/// Line-delimited JSON over TCP. One io thread owns every connection, so requests reach the
/// Service one at a time. Besides the Service request types, connections understand
/// subscribe_state {rate_hz, count?} and unsubscribe_state {subscription}.
class Server {
public:
    /// Port 0 picks a free port; see port().
    Server(Service& service, std::uint16_t port, double tick_hz = 50.0);

    std::uint16_t port() const;
    /// Blocks until stop() is called.
    void run();
    /// Thread-safe.
    void stop();

private:
    void accept();
    void schedule_tick();

    Service& service_;
    boost::asio::io_context io_;
    boost::asio::ip::tcp::acceptor acceptor_;
    boost::asio::steady_timer tick_timer_;
    std::chrono::steady_clock::duration tick_period_;
};

}  // namespace workbench::service
