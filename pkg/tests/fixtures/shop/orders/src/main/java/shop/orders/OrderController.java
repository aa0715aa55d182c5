package shop.orders;

import org.springframework.web.bind.annotation.*;

@RestController
@RequestMapping("/api/orders")
public class OrderController {

    private final OrderService orderService;

    public OrderController(OrderService orderService) {
        this.orderService = orderService;
    }

    @GetMapping
    public List<Order> list() {
        return orderService.listOrders();
    }

    @GetMapping("/{id}")
    public Order get(@PathVariable("id") long id) {
        return orderService.getOrder(id);
    }

    @GetMapping("/{id}/items")
    public List<OrderItem> items(@PathVariable("id") long id) {
        return orderService.getItems(id);
    }

    @PutMapping("/{id}/status")
    public Order updateStatus(@PathVariable("id") long id, @RequestBody String status) {
        return orderService.changeStatus(id, status);
    }
}
