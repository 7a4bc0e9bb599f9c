import { describe, expect, it } from 'vitest';

import { baseGroupColor, groupColor } from '../src/color';

describe('groupColor', () => {
  it('hits pure blue, purple, and orange at the anchor scalars', () => {
    expect(groupColor(0)).toBe('rgb(43, 91, 214)');
    expect(groupColor(0.5)).toBe('rgb(137, 74, 184)');
    expect(groupColor(1)).toBe('rgb(240, 140, 33)');
  });

  it('clamps out-of-range scalars', () => {
    expect(groupColor(-1)).toBe(groupColor(0));
    expect(groupColor(2)).toBe(groupColor(1));
  });

  it('interpolates monotonically between anchors', () => {
    const quarter = groupColor(0.25).match(/\d+/g)!.map(Number);
    expect(quarter[0]).toBeGreaterThan(43);
    expect(quarter[0]).toBeLessThan(137);
  });

  it('maps group names to their anchor colors', () => {
    expect(baseGroupColor('suppressed')).toBe(groupColor(0));
    expect(baseGroupColor('shared')).toBe(groupColor(0.5));
    expect(baseGroupColor('emphasized')).toBe(groupColor(1));
    expect(baseGroupColor(null)).toBe('rgb(153, 153, 153)');
  });
});
