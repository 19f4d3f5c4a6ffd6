"""Built-in priority and mapping files used when none are given.

The messages mirror Snort/ET rule texts for the benchmark attack mix. They are
example configuration; real runs should supply files matching the rule sets
actually loaded into the IDS under test.
"""

from .plan import parse_mapping, parse_priorities

DEFAULT_PRIORITIES_TEXT = """\
# attack_type | priority | message
ssh_bruteforce_success | 0 | ET SCAN Potential SSH Scan
ssh_bruteforce_success | 1 | ET INFO NetSSH SSH Version String Hardcoded in Metasploit
ssh_bruteforce_fail    | 0 | ET SCAN Potential SSH Scan
ssh_bruteforce_fail    | 1 | ET INFO NetSSH SSH Version String Hardcoded in Metasploit
tcp_connect_flood      | 0 | ET DOS Possible TCP Connect Flood
tcp_syn_flood          | 0 | ET DOS Possible SYN Flood
udp_flood              | 0 | ET DOS Possible UDP Flood
syn_scan               | 0 | TCPScan
syn_os_scan            | 0 | TCPScan
syn_os_scan            | 0 | ET SCAN NMAP OS Detection Probe
udp_scan               | 0 | UDPScan
user_enumeration       | 0 | ET SCAN SSH User Enumeration Attempt
user_enumeration       | 1 | ET SCAN Potential SSH Scan
"""

DEFAULT_MAPPING_TEXT = """\
TCPScan <= TCPFilteredScan, TCPScan
UDPScan <= UDPFilteredScan, UDPScan
"""


def default_priorities():
    return parse_priorities(DEFAULT_PRIORITIES_TEXT, source="<default priorities>")


def default_mapping():
    return parse_mapping(DEFAULT_MAPPING_TEXT, source="<default mapping>")
