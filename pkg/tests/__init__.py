# Tests for vessel-transfer
