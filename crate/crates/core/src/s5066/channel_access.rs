use crate::kernel::SimTime;

/// Link establishment. The radios are assumed to already share a frequency,
/// so establishing the link always succeeds immediately.
#[derive(Debug, Default)]
pub struct ChannelAccess {
    invocations: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linked {
    pub at: SimTime,
}

impl ChannelAccess {
    pub fn establish(&mut self) -> Linked {
        self.invocations += 1;
        Linked { at: SimTime::ZERO }
    }

    pub fn invocations(&self) -> u32 {
        self.invocations
    }
}
