/// Byte `offset` of flow `flow`'s application stream. Streams are virtual;
/// only this function defines their content.
pub fn stream_byte(flow: u32, offset: u64) -> u8 {
    let mut z = ((flow as u64) << 48) ^ offset.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u8
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Fletcher {
    a: u64,
    b: u64,
}

impl Fletcher {
    fn push(&mut self, byte: u8) {
        self.a = (self.a + byte as u64 + 1) % 0xFFFF_FFFB;
        self.b = (self.b + self.a) % 0xFFFF_FFFB;
    }

    fn value(&self) -> u64 {
        (self.b << 32) | self.a
    }
}

/// Order-sensitive checksum of what an application actually received.
#[derive(Clone, Debug)]
pub struct StreamAudit {
    flow: u32,
    next: u64,
    sum: Fletcher,
    gaps_or_overlaps: u64,
}

impl StreamAudit {
    pub fn new(flow: u32) -> Self {
        StreamAudit {
            flow,
            next: 0,
            sum: Fletcher::default(),
            gaps_or_overlaps: 0,
        }
    }

    /// Records bytes `[offset, offset + len)` handed to the application.
    pub fn feed(&mut self, offset: u64, len: u32) {
        if offset != self.next {
            self.gaps_or_overlaps += 1;
        }
        for i in offset..offset + len as u64 {
            self.sum.push(stream_byte(self.flow, i));
        }
        self.next = offset + len as u64;
    }

    pub fn received(&self) -> u64 {
        self.next
    }

    pub fn digest(&self) -> u64 {
        self.sum.value()
    }

    /// Checksum of the first `len` bytes of the flow's stream.
    pub fn expected_digest(flow: u32, len: u64) -> u64 {
        let mut f = Fletcher::default();
        for i in 0..len {
            f.push(stream_byte(flow, i));
        }
        f.value()
    }

    /// The application saw exactly the first `len` bytes, once, in order.
    pub fn verify(&self, len: u64) -> bool {
        self.gaps_or_overlaps == 0 && self.next == len && self.digest() == Self::expected_digest(self.flow, len)
    }
}
