"""Deterministic synthetic attack captures for tests and desk-scale runs.

These stand in for captures recorded from real attack tools. Each capture has
both directions so that response stripping has something to do.
"""

from __future__ import annotations

import random

from ..plan import DEFAULT_FLOOD_THRESHOLD, AttackType
from .packets import (
    PROTO_ICMP, PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN,
    PacketRecord, build_frame, decode_frame,
)

SYNTH_ATTACKER = "192.168.56.101"
SYNTH_TARGET = "192.168.56.102"
SYNTH_EPOCH = 1_500_000_000

SCAN_PORTS = (21, 22, 23, 25, 53, 80, 110, 111, 135, 139, 143, 443, 445, 993, 995,
              1723, 3306, 3389, 5900, 8080)
UDP_SCAN_PORTS = (53, 67, 68, 69, 123, 135, 137, 138, 161, 162, 445, 500, 514, 520,
                  631, 1434, 1900, 4500, 5353, 49152)
OPEN_TCP_PORTS = frozenset({22, 80})
OPEN_UDP_PORTS = frozenset({53, 123})


class _Builder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.t_us = SYNTH_EPOCH * 1_000_000 + rng.randrange(1_000_000)
        self.frames: list[PacketRecord] = []
        self.ident = rng.randrange(1, 0xFFFF)

    def emit(self, src, dst, proto, sport=0, dport=0, gap_us=None, **kw):
        self.t_us += gap_us if gap_us is not None else self.rng.randrange(50, 2000)
        self.ident = (self.ident + 1) & 0xFFFF
        raw = build_frame(src, dst, proto, sport, dport, ident=self.ident, **kw)
        self.frames.append(decode_frame(self.t_us // 1_000_000, self.t_us % 1_000_000, raw))

    def fwd(self, proto, sport=0, dport=0, **kw):
        self.emit(SYNTH_ATTACKER, SYNTH_TARGET, proto, sport, dport, **kw)

    def rev(self, proto, sport=0, dport=0, **kw):
        self.emit(SYNTH_TARGET, SYNTH_ATTACKER, proto, sport, dport, **kw)

    def sport(self):
        return self.rng.randrange(32768, 61000)

    def tcp_session(self, dport, client_payloads, server_payloads):
        sp = self.sport()
        cseq, sseq = self.rng.getrandbits(32), self.rng.getrandbits(32)
        self.fwd(PROTO_TCP, sp, dport, flags=TCP_SYN, seq=cseq)
        self.rev(PROTO_TCP, dport, sp, flags=TCP_SYN | TCP_ACK, seq=sseq, ack=cseq + 1)
        cseq += 1
        sseq += 1
        self.fwd(PROTO_TCP, sp, dport, flags=TCP_ACK, seq=cseq, ack=sseq)
        for i in range(max(len(client_payloads), len(server_payloads))):
            if i < len(server_payloads):
                data = server_payloads[i]
                self.rev(PROTO_TCP, dport, sp, flags=TCP_PSH | TCP_ACK, seq=sseq, ack=cseq,
                         payload=data)
                sseq += len(data)
            if i < len(client_payloads):
                data = client_payloads[i]
                self.fwd(PROTO_TCP, sp, dport, flags=TCP_PSH | TCP_ACK, seq=cseq, ack=sseq,
                         payload=data)
                cseq += len(data)
        self.fwd(PROTO_TCP, sp, dport, flags=TCP_FIN | TCP_ACK, seq=cseq, ack=sseq)
        self.rev(PROTO_TCP, dport, sp, flags=TCP_FIN | TCP_ACK, seq=sseq, ack=cseq + 1)
        self.fwd(PROTO_TCP, sp, dport, flags=TCP_ACK, seq=cseq + 1, ack=sseq + 1)


def _ssh_bruteforce(b: _Builder, success: bool):
    attempts = b.rng.randint(4, 8)
    banner = b"SSH-2.0-OpenSSH_7.4p1 Ubuntu-10\r\n"
    for i in range(attempts):
        last = i == attempts - 1
        blob = bytes(b.rng.getrandbits(8) for _ in range(b.rng.randint(48, 96)))
        reply = b"\x00\x00\x00\x0c\x0a\x34" if (success and last) else b"\x00\x00\x00\x0c\x0a\x33"
        b.tcp_session(22, [b"SSH-2.0-libssh\r\n", blob], [banner, reply])


def _connect_flood(b: _Builder, count: int):
    for _ in range(count):
        sp = b.sport()
        seq = b.rng.getrandbits(32)
        b.fwd(PROTO_TCP, sp, 80, flags=TCP_SYN, seq=seq, gap_us=b.rng.randrange(20, 200))
        b.rev(PROTO_TCP, 80, sp, flags=TCP_SYN | TCP_ACK, seq=1000, ack=seq + 1, gap_us=30)
        b.fwd(PROTO_TCP, sp, 80, flags=TCP_ACK, seq=seq + 1, ack=1001, gap_us=30)
        b.fwd(PROTO_TCP, sp, 80, flags=TCP_RST | TCP_ACK, seq=seq + 1, ack=1001, gap_us=30)


def _syn_flood(b: _Builder, count: int):
    for i in range(count):
        sp = b.sport()
        seq = b.rng.getrandbits(32)
        b.fwd(PROTO_TCP, sp, 80, flags=TCP_SYN, seq=seq, gap_us=b.rng.randrange(5, 50))
        if i % 3 == 0:
            b.rev(PROTO_TCP, 80, sp, flags=TCP_SYN | TCP_ACK, seq=1000, ack=seq + 1, gap_us=10)


def _udp_flood(b: _Builder, count: int):
    for i in range(count):
        dport = b.rng.randrange(1024, 65535)
        size = b.rng.randint(0, 64)
        b.fwd(PROTO_UDP, b.sport(), dport, payload=bytes(size), gap_us=b.rng.randrange(5, 50))
        if i % 10 == 0:
            _icmp_unreachable(b, b.frames[-1])


def _icmp_unreachable(b: _Builder, probe: PacketRecord):
    # Type 3 code 3 quotes the offending IP header plus 8 bytes.
    quoted = probe.raw_bytes[14:14 + 28]
    b.rev(PROTO_ICMP, icmp_type=3, icmp_code=3, payload=quoted, gap_us=40)


def _syn_scan(b: _Builder, os_probe: bool):
    ports = list(SCAN_PORTS)
    b.rng.shuffle(ports)
    sp = b.sport()
    for port in ports:
        seq = b.rng.getrandbits(32)
        b.fwd(PROTO_TCP, sp, port, flags=TCP_SYN, seq=seq, window=1024,
              tcp_options=b"\x02\x04\x05\xb4")
        if port in OPEN_TCP_PORTS:
            b.rev(PROTO_TCP, port, sp, flags=TCP_SYN | TCP_ACK, seq=4242, ack=seq + 1)
        else:
            b.rev(PROTO_TCP, port, sp, flags=TCP_RST | TCP_ACK, ack=seq + 1)
    if os_probe:
        # Odd option layouts / flag combinations in the style of OS fingerprinting.
        opts = [b"\x03\x03\x0a\x01\x02\x04\x05\xb4\x08\x0a\xff\xff\xff\xff\x00\x00\x00\x00\x04\x02",
                b"\x02\x04\x05\x78\x03\x03\x00\x04\x02\x08\x0a\xff\xff\xff\xff\x00\x00\x00\x00",
                b"\x08\x0a\xff\xff\xff\xff\x00\x00\x00\x00\x01\x01\x03\x03\x05"]
        for i, opt in enumerate(opts):
            b.fwd(PROTO_TCP, sp + 1 + i, 22, flags=TCP_SYN, seq=b.rng.getrandbits(32),
                  window=(1, 63, 4)[i], tcp_options=opt)
            b.rev(PROTO_TCP, 22, sp + 1 + i, flags=TCP_SYN | TCP_ACK, seq=7, ack=1)
        b.fwd(PROTO_ICMP, icmp_type=8, icmp_code=9, payload=bytes(120))
        b.rev(PROTO_ICMP, icmp_type=0, payload=bytes(120))
        b.fwd(PROTO_UDP, sp + 10, 40125, payload=b"C" * 300)
        _icmp_unreachable(b, b.frames[-1])
        b.fwd(PROTO_TCP, sp + 11, 1, flags=TCP_FIN | TCP_PSH | 0x20, seq=1, window=255)


def _udp_scan(b: _Builder):
    ports = list(UDP_SCAN_PORTS)
    b.rng.shuffle(ports)
    sp = b.sport()
    for port in ports:
        b.fwd(PROTO_UDP, sp, port, payload=b"" if port not in (53, 123) else bytes(48))
        if port in OPEN_UDP_PORTS:
            b.rev(PROTO_UDP, port, sp, payload=bytes(48))
        else:
            _icmp_unreachable(b, b.frames[-1])


def _user_enumeration(b: _Builder):
    users = ["root", "admin", "test", "guest", "oracle", "ubuntu", "postgres", "user"]
    b.rng.shuffle(users)
    for user in users[:b.rng.randint(4, len(users))]:
        b.tcp_session(22, [b"SSH-2.0-Nmap-SSH2-Hostkey\r\n", b"\x00\x00\x00\x1c\x32" + user.encode()],
                      [b"SSH-2.0-OpenSSH_7.4p1\r\n", b"\x00\x00\x00\x0c\x33"])


def synth_attack_capture(attack_type: AttackType, seed: int,
                         flood_threshold: int = DEFAULT_FLOOD_THRESHOLD) -> list[PacketRecord]:
    """Generate a two-direction capture between SYNTH_ATTACKER and SYNTH_TARGET.

    Deterministic in ``(attack_type, seed)``. Flood types emit at least
    ``flood_threshold`` attacker packets.
    """
    rng = random.Random(f"{attack_type.value}:{seed}")
    b = _Builder(rng)
    extra = rng.randint(10, 60)
    if attack_type is AttackType.SSH_BRUTEFORCE_SUCCESS:
        _ssh_bruteforce(b, success=True)
    elif attack_type is AttackType.SSH_BRUTEFORCE_FAIL:
        _ssh_bruteforce(b, success=False)
    elif attack_type is AttackType.TCP_CONNECT_FLOOD:
        # Three attacker packets per connection.
        _connect_flood(b, -(-(flood_threshold + extra) // 3))
    elif attack_type is AttackType.TCP_SYN_FLOOD:
        _syn_flood(b, flood_threshold + extra)
    elif attack_type is AttackType.UDP_FLOOD:
        _udp_flood(b, flood_threshold + extra)
    elif attack_type is AttackType.SYN_SCAN:
        _syn_scan(b, os_probe=False)
    elif attack_type is AttackType.SYN_OS_SCAN:
        _syn_scan(b, os_probe=True)
    elif attack_type is AttackType.UDP_SCAN:
        _udp_scan(b)
    elif attack_type is AttackType.USER_ENUMERATION:
        _user_enumeration(b)
    else:  # pragma: no cover
        raise ValueError(attack_type)
    return b.frames
