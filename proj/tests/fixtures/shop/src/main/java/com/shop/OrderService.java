package com.shop;

import com.shop.util.TextUtil;

public class OrderService {

    private final Inventory inventory;
    private final PriceCalculator calculator;

    public OrderService(Inventory inventory, PriceCalculator calculator) {
        this.inventory = inventory;
        this.calculator = calculator;
    }

    public double checkout(Cart cart, int discountPercent) {
        if (cart.isEmpty()) {
            throw new IllegalStateException("empty cart");
        }
        return calculator.total(cart, discountPercent);
    }

    public boolean canFulfil(Cart cart) {
        return !cart.isEmpty() && inventory.available("*") >= 0;
    }

    public void cancel(String orderId) {
        // orders are not persisted yet
    }

    public String receipt(Cart cart, double total) {
        return cart.itemCount() + " items, " + TextUtil.formatMoney(total);
    }
}
