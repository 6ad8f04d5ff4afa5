import { describe, expect, it } from 'vitest';
import { placeBox, placementStyle } from '../src/overlay.js';

describe('placeBox', () => {
  it('is the identity when shown size equals natural size', () => {
    const p = placeBox([10, 20, 110, 70], 640, 480, 640, 480);
    expect(p).toEqual({ left: 10, top: 20, width: 100, height: 50 });
  });

  it('scales boxes down with the displayed image', () => {
    const p = placeBox([100, 200, 300, 400], 1000, 1000, 500, 500);
    expect(p).toEqual({ left: 50, top: 100, width: 100, height: 100 });
  });

  it('handles anisotropic scaling', () => {
    const p = placeBox([0, 0, 200, 100], 400, 100, 200, 200);
    expect(p).toEqual({ left: 0, top: 0, width: 100, height: 200 });
  });

  it('normalizes swapped corners', () => {
    const p = placeBox([110, 70, 10, 20], 640, 480, 640, 480);
    expect(p).toEqual({ left: 10, top: 20, width: 100, height: 50 });
  });

  it('clips boxes that poke past the frame', () => {
    const p = placeBox([600, 440, 700, 520], 640, 480, 640, 480);
    expect(p.left + p.width).toBeLessThanOrEqual(640);
    expect(p.top + p.height).toBeLessThanOrEqual(480);
    expect(p.left).toBe(600);
    expect(p.width).toBe(40);
  });

  it('collapses when the natural size is degenerate', () => {
    expect(placeBox([1, 2, 3, 4], 0, 0, 640, 480)).toEqual({
      left: 0,
      top: 0,
      width: 0,
      height: 0,
    });
  });
});

describe('placementStyle', () => {
  it('renders one-decimal pixel styles', () => {
    const style = placementStyle({ left: 12.34, top: 0, width: 99.96, height: 7 });
    expect(style).toBe('left:12.3px;top:0.0px;width:100.0px;height:7.0px');
  });
});
